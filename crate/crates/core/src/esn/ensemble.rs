use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::reservoir::{activation, advance_in_place};
use super::{fit_readout, init_esn, EsnHyper, EsnState, EsnWeights, FitOutcome, TrainingBuffer};
use crate::error::{Error, Result};
use crate::risk::PredictionMatrix;
use crate::simcore::{BG_CEIL, BG_FLOOR};

/// Maps physical inputs and glucose to the O(1) range the reservoir sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// insulin-units per normalized bolus unit
    pub bolus_scale: f64,
    /// grams per normalized carb unit
    pub carb_scale: f64,
    pub bg_offset: f64,
    pub bg_scale: f64,
}

impl Normalizer {
    /// Bolus over `20 x basal`, carbs over 100 g, glucose as `(bg - 120) / 100`.
    pub fn for_basal(basal_rate: f64) -> Self {
        Normalizer {
            bolus_scale: 20.0 * basal_rate,
            carb_scale: 100.0,
            bg_offset: 120.0,
            bg_scale: 100.0,
        }
    }

    pub fn identity() -> Self {
        Normalizer {
            bolus_scale: 1.0,
            carb_scale: 1.0,
            bg_offset: 0.0,
            bg_scale: 1.0,
        }
    }

    #[inline]
    pub fn input(&self, bolus: f64, carbs: f64) -> [f64; 2] {
        [bolus / self.bolus_scale, carbs / self.carb_scale]
    }

    #[inline]
    pub fn target(&self, bg: f64) -> f64 {
        (bg - self.bg_offset) / self.bg_scale
    }

    #[inline]
    pub fn output(&self, y: f64) -> f64 {
        y * self.bg_scale + self.bg_offset
    }
}

/// Seed of ensemble member `m` derived from a base seed (splitmix64).
pub fn member_seed(base: u64, m: usize) -> u64 {
    let mut z = base.wrapping_add((m as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct Member {
    seed: u64,
    weights: EsnWeights,
    state: EsnState,
    buffer: TrainingBuffer,
}

/// Independent reservoirs trained on the same targets.
///
/// Each member keeps a live hidden state driven by the realized inputs of
/// the current episode. Rollouts copy that state and never write back.
#[derive(Debug, Clone)]
pub struct Ensemble {
    hyper: EsnHyper,
    normalizer: Normalizer,
    members: Vec<Member>,
}

/// Readouts and hyperparameters, enough to rebuild a fitted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSnapshot {
    pub hyper: EsnHyper,
    pub normalizer: Normalizer,
    pub seeds: Vec<u64>,
    /// per member, row-major `L x (N + K)`
    pub w_out: Vec<Option<Vec<f64>>>,
}

impl Ensemble {
    pub fn new(hyper: EsnHyper, normalizer: Normalizer, seeds: &[u64]) -> Result<Self> {
        hyper.validate()?;
        if hyper.input_dim != super::INPUT_DIM || hyper.output_dim != super::OUTPUT_DIM {
            return Err(Error::Config(format!(
                "esn: the glucose ensemble takes {} inputs and {} output",
                super::INPUT_DIM,
                super::OUTPUT_DIM
            )));
        }
        if seeds.is_empty() {
            return Err(Error::InvalidInput(
                "ensemble needs at least one member".into(),
            ));
        }
        let members = seeds
            .iter()
            .enumerate()
            .map(|(m, &seed)| {
                let weights = init_esn(&hyper, seed).map_err(|e| Error::Member {
                    member: m,
                    source: Box::new(e),
                })?;
                Ok(Member {
                    seed,
                    weights,
                    state: EsnState::zeros(hyper.reservoir_size, hyper.input_dim),
                    buffer: TrainingBuffer::new(
                        hyper.feature_dim(),
                        hyper.output_dim,
                        hyper.buffer_capacity,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble {
            hyper,
            normalizer,
            members,
        })
    }

    /// `size` members with seeds derived from `base_seed`.
    pub fn init_ensemble(
        hyper: EsnHyper,
        normalizer: Normalizer,
        size: usize,
        base_seed: u64,
    ) -> Result<Self> {
        let seeds: Vec<u64> = (0..size).map(|m| member_seed(base_seed, m)).collect();
        Ensemble::new(hyper, normalizer, &seeds)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn hyper(&self) -> &EsnHyper {
        &self.hyper
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn weights(&self, member: usize) -> &EsnWeights {
        &self.members[member].weights
    }

    pub fn state(&self, member: usize) -> &EsnState {
        &self.members[member].state
    }

    pub fn states(&self) -> Vec<EsnState> {
        self.members.iter().map(|m| m.state.clone()).collect()
    }

    pub fn buffer(&self, member: usize) -> &TrainingBuffer {
        &self.members[member].buffer
    }

    pub fn is_fitted(&self) -> bool {
        self.members.iter().all(|m| m.weights.is_fitted())
    }

    /// Zeroes every live state (episode start).
    pub fn reset_states(&mut self) {
        let (n, k) = (self.hyper.reservoir_size, self.hyper.input_dim);
        for m in &mut self.members {
            m.state = EsnState::zeros(n, k);
        }
    }

    /// Advances all live states with a realized bolus and carb intake.
    pub fn advance(&mut self, bolus: f64, carbs: f64) {
        let u = self.normalizer.input(bolus, carbs);
        let leak = self.hyper.leak_rate;
        for m in &mut self.members {
            advance_in_place(&mut m.state, &m.weights, &u, leak);
        }
    }

    /// Records the current `[x; u]` against an observed glucose, once the
    /// episode is past its washout.
    pub fn record(&mut self, observed_bg: f64) {
        let y = self.normalizer.target(observed_bg);
        let washout = self.hyper.washout;
        for m in &mut self.members {
            if m.state.t > washout {
                m.buffer.push(m.state.features(), vec![y]);
            }
        }
    }

    /// Refits every member on its own buffer. Returns how many members got a
    /// new readout; members with too little data keep their previous one.
    pub fn fit(&mut self) -> Result<usize> {
        let ridge = self.hyper.ridge;
        let mut fitted = 0;
        for (i, m) in self.members.iter_mut().enumerate() {
            match fit_readout(&m.buffer, ridge).map_err(|e| Error::Member {
                member: i,
                source: Box::new(e),
            })? {
                FitOutcome::Fitted(w) => {
                    m.weights.w_out = Some(w);
                    fitted += 1;
                }
                FitOutcome::InsufficientData { .. } => {}
            }
        }
        Ok(fitted)
    }

    /// Predicted glucose of each member along one input sequence. `bolus`
    /// and `carbs` must have equal length.
    pub fn rollout(&self, bolus: &[f64], carbs: &[f64]) -> Result<PredictionMatrix> {
        let mut out = self.rollout_batch(std::slice::from_ref(&bolus.to_vec()), carbs)?;
        Ok(out.pop().expect("one sequence"))
    }

    /// One prediction matrix per bolus sequence, all sharing `carbs`.
    pub fn rollout_batch(
        &self,
        sequences: &[Vec<f64>],
        carbs: &[f64],
    ) -> Result<Vec<PredictionMatrix>> {
        let horizon = carbs.len();
        if sequences.iter().any(|s| s.len() != horizon) {
            return Err(Error::InvalidInput(
                "bolus and carb sequences differ in length".into(),
            ));
        }
        let lanes = sequences.len();
        let m_count = self.members.len();
        let mut grid = vec![vec![0.0; m_count * horizon]; lanes];
        for (mi, member) in self.members.iter().enumerate() {
            let preds = self
                .member_rollout_lanes(member, &member.state, sequences, carbs)
                .map_err(|e| Error::Member {
                    member: mi,
                    source: Box::new(e),
                })?;
            for (s, p) in preds.into_iter().enumerate() {
                grid[s][mi * horizon..(mi + 1) * horizon].copy_from_slice(&p);
            }
        }
        grid.into_iter()
            .map(|v| PredictionMatrix::new(m_count, horizon, v))
            .collect()
    }

    /// Rollout of a single member from an arbitrary starting state.
    pub fn member_rollout(
        &self,
        member: usize,
        start: &EsnState,
        bolus: &[f64],
        carbs: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out =
            self.member_rollout_lanes(&self.members[member], start, &[bolus.to_vec()], carbs)?;
        Ok(out.pop().expect("one lane"))
    }

    fn member_rollout_lanes(
        &self,
        member: &Member,
        start: &EsnState,
        sequences: &[Vec<f64>],
        carbs: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let w = &member.weights;
        let w_out = w.w_out.as_ref().ok_or(Error::NotFitted)?;
        let (n, k, lanes) = (w.n, w.k, sequences.len());
        let horizon = carbs.len();
        let leak = self.hyper.leak_rate;
        let mut preds = vec![Vec::with_capacity(horizon); lanes];
        if horizon == 0 || lanes == 0 {
            return Ok(preds);
        }
        let readout_x: Vec<f64> = w_out.row(0).iter().take(n).copied().collect();
        let readout_u: Vec<f64> = w_out.row(0).iter().skip(n).copied().collect();

        let mut x = vec![0.0; n * lanes];
        for j in 0..n {
            x[j * lanes..(j + 1) * lanes].fill(start.x[j]);
        }
        let mut pre = vec![0.0; n * lanes];
        let mut u = vec![[0.0; 2]; lanes];
        for t in 0..horizon {
            for (s, seq) in sequences.iter().enumerate() {
                u[s] = self.normalizer.input(seq[t], carbs[t]);
            }
            for i in 0..n {
                let wi = &w.w_in[i * k..(i + 1) * k];
                for s in 0..lanes {
                    pre[i * lanes + s] = wi[0] * u[s][0] + wi[1] * u[s][1];
                }
            }
            w.w.mul_add_lanes(lanes, &x, &mut pre);
            for (xv, p) in x.iter_mut().zip(&pre) {
                *xv = (1.0 - leak) * *xv + leak * activation(*p);
            }
            for s in 0..lanes {
                let mut y = readout_u[0] * u[s][0] + readout_u[1] * u[s][1];
                for j in 0..n {
                    y += readout_x[j] * x[j * lanes + s];
                }
                let bg = self.normalizer.output(y);
                preds[s].push(if bg.is_nan() {
                    BG_CEIL
                } else {
                    bg.clamp(BG_FLOOR, BG_CEIL)
                });
            }
        }
        Ok(preds)
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot {
            hyper: self.hyper.clone(),
            normalizer: self.normalizer,
            seeds: self.members.iter().map(|m| m.seed).collect(),
            w_out: self
                .members
                .iter()
                .map(|m| {
                    m.weights
                        .w_out
                        .as_ref()
                        .map(|w| w.transpose().as_slice().to_vec())
                })
                .collect(),
        }
    }

    /// Rebuilds reservoirs from seeds and installs the saved readouts.
    /// Training buffers start empty.
    pub fn from_snapshot(snap: &EnsembleSnapshot) -> Result<Self> {
        if snap.seeds.len() != snap.w_out.len() {
            return Err(Error::Format(
                "snapshot seeds and readouts differ in count".into(),
            ));
        }
        let mut e = Ensemble::new(snap.hyper.clone(), snap.normalizer, &snap.seeds)?;
        let (l, d) = (snap.hyper.output_dim, snap.hyper.feature_dim());
        for (m, w) in e.members.iter_mut().zip(&snap.w_out) {
            if let Some(w) = w {
                if w.len() != l * d {
                    return Err(Error::Format(format!(
                        "readout has {} values, expected {}",
                        w.len(),
                        l * d
                    )));
                }
                m.weights.w_out = Some(DMatrix::from_row_slice(l, d, w));
            }
        }
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.snapshot())
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: EnsembleSnapshot = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ensemble::from_snapshot(&snap)
    }
}
