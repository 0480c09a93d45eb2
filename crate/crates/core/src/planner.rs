//! Receding-horizon bolus planner over a fixed action table.
//!
//! Every 5-minute step the planner rolls each of the six candidate
//! sequences through the ensemble, scores them by mean risk and executes the
//! first bolus of the cheapest one. Candidate `s` boluses
//! `multiplier[s] x basal_rate` at its first step and nothing afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::Ensemble;
use crate::risk::{cost_of_mean, mean_ensemble_cost, risk_margin_profile, PredictionMatrix};

pub const DEFAULT_MULTIPLIERS: [f64; 6] = [0.0, 5.0, 10.0, 20.0, 40.0, 80.0];
/// 48 steps of 5 minutes.
pub const DEFAULT_HORIZON: usize = 48;
/// Costs closer than this (relative) count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionTable {
    multipliers: Vec<f64>,
    horizon: usize,
    basal_rate: f64,
    sequences: Vec<Vec<f64>>,
}

impl ActionTable {
    pub fn new(basal_rate: f64, multipliers: &[f64], horizon: usize) -> Result<Self> {
        if !(basal_rate > 0.0 && basal_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "basal rate must be positive, got {basal_rate}"
            )));
        }
        if horizon == 0 || multipliers.is_empty() {
            return Err(Error::InvalidInput(
                "action table needs a horizon and candidates".into(),
            ));
        }
        if multipliers.windows(2).any(|w| !(w[0] < w[1])) || multipliers[0] < 0.0 {
            return Err(Error::InvalidInput(
                "multipliers must be non-negative and increasing".into(),
            ));
        }
        let sequences = multipliers
            .iter()
            .map(|m| {
                let mut seq = vec![0.0; horizon];
                seq[0] = m * basal_rate;
                seq
            })
            .collect();
        Ok(ActionTable {
            multipliers: multipliers.to_vec(),
            horizon,
            basal_rate,
            sequences,
        })
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn basal_rate(&self) -> f64 {
        self.basal_rate
    }

    pub fn sequences(&self) -> &[Vec<f64>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// The standard six-candidate, 48-step table.
pub fn build_action_table(basal_rate: f64) -> Result<ActionTable> {
    ActionTable::new(basal_rate, &DEFAULT_MULTIPLIERS, DEFAULT_HORIZON)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// mean risk over every member and step
    WithUncertainty,
    /// risk of the ensemble-mean prediction, averaged over steps
    WithoutUncertainty,
}

/// Anything that can predict glucose for a batch of bolus sequences.
pub trait Predictor {
    fn predict(&self, sequences: &[Vec<f64>], carbs: &[f64]) -> Result<Vec<PredictionMatrix>>;
}

impl Predictor for Ensemble {
    fn predict(&self, sequences: &[Vec<f64>], carbs: &[f64]) -> Result<Vec<PredictionMatrix>> {
        self.rollout_batch(sequences, carbs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub chosen_index: usize,
    pub chosen_multiplier: f64,
    pub chosen_bolus: f64,
    pub per_sequence_costs: Vec<f64>,
    pub prediction_matrix: PredictionMatrix,
    pub risk_margin_profile: Vec<f64>,
}

pub fn sequence_cost(preds: &PredictionMatrix, mode: CostMode) -> Result<f64> {
    match mode {
        CostMode::WithUncertainty => mean_ensemble_cost(preds),
        CostMode::WithoutUncertainty => cost_of_mean(preds),
    }
}

/// Index of the smallest cost; near-ties go to the earliest (smallest
/// multiplier). NaN never wins.
pub fn select_argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate().skip(1) {
        let b = costs[best];
        let better = if b.is_nan() {
            !c.is_nan()
        } else {
            c < b - TIE_TOLERANCE * b.abs().max(c.abs()).max(1.0)
        };
        if better {
            best = i;
        }
    }
    best
}

/// Scores every sequence of `table`. `carbs_now` is the intake observed at
/// the current step; later steps assume no carbs.
pub fn plan<P: Predictor + ?Sized>(
    predictor: &P,
    table: &ActionTable,
    mode: CostMode,
    carbs_now: f64,
) -> Result<Plan> {
    let mut carbs = vec![0.0; table.horizon()];
    carbs[0] = carbs_now;
    let preds = predictor.predict(table.sequences(), &carbs)?;
    if preds.len() != table.len() {
        return Err(Error::InvalidInput(format!(
            "predictor returned {} matrices for {} sequences",
            preds.len(),
            table.len()
        )));
    }
    let costs = preds
        .iter()
        .map(|p| sequence_cost(p, mode))
        .collect::<Result<Vec<_>>>()?;
    let chosen = select_argmin(&costs);
    let prediction_matrix = preds.into_iter().nth(chosen).expect("index in range");
    Ok(Plan {
        chosen_index: chosen,
        chosen_multiplier: table.multipliers()[chosen],
        chosen_bolus: table.sequences()[chosen][0],
        per_sequence_costs: costs,
        risk_margin_profile: risk_margin_profile(&prediction_matrix),
        prediction_matrix,
    })
}

/// First bolus of the chosen sequence.
pub fn act(plan: &Plan) -> f64 {
    plan.chosen_bolus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{risk, risk_margin};
    use proptest::prelude::*;

    /// Predictions chosen per sequence by a closure of (sequence index, model, step).
    struct Stub<F: Fn(usize, usize, usize) -> f64> {
        models: usize,
        f: F,
    }

    impl<F: Fn(usize, usize, usize) -> f64> Predictor for Stub<F> {
        fn predict(&self, sequences: &[Vec<f64>], carbs: &[f64]) -> Result<Vec<PredictionMatrix>> {
            let t = carbs.len();
            sequences
                .iter()
                .enumerate()
                .map(|(s, _)| {
                    let v = (0..self.models)
                        .flat_map(|m| (0..t).map(move |k| (m, k)))
                        .map(|(m, k)| (self.f)(s, m, k))
                        .collect();
                    PredictionMatrix::new(self.models, t, v)
                })
                .collect()
        }
    }

    #[test]
    fn table_shape() {
        let t = build_action_table(0.2).unwrap();
        assert_eq!(t.len(), 6);
        let first: Vec<f64> = t.sequences().iter().map(|s| s[0]).collect();
        let expected = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];
        for (a, b) in first.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        for s in t.sequences() {
            assert_eq!(s.len(), 48);
            assert!(s[1..].iter().all(|&b| b == 0.0));
        }
        assert!(build_action_table(0.0).is_err());
    }

    #[test]
    fn flat_predictions_pick_zero() {
        let stub = Stub {
            models: 5,
            f: |_, _, _| 112.5,
        };
        let t = build_action_table(0.1).unwrap();
        let p = plan(&stub, &t, CostMode::WithUncertainty, 0.0).unwrap();
        assert_eq!(p.chosen_multiplier, 0.0);
        assert_eq!(act(&p), 0.0);
        assert!(p.per_sequence_costs.iter().all(|c| *c < 1e-3));
    }

    #[test]
    fn monotone_stub_picks_largest() {
        // more insulin pulls predictions from 300 toward 112.5
        let stub = Stub {
            models: 3,
            f: |s, _, k| 300.0 - (300.0 - 112.5) * (s as f64 / 5.0) * (k as f64 / 47.0),
        };
        let t = build_action_table(0.1).unwrap();
        for mode in [CostMode::WithUncertainty, CostMode::WithoutUncertainty] {
            assert_eq!(plan(&stub, &t, mode, 0.0).unwrap().chosen_multiplier, 80.0);
        }
    }

    #[test]
    fn act_returns_first_bolus() {
        let stub = Stub {
            models: 1,
            f: |s, _, _| if s == 3 { 112.5 } else { 200.0 },
        };
        let t = build_action_table(0.2).unwrap();
        let p = plan(&stub, &t, CostMode::WithUncertainty, 0.0).unwrap();
        assert_eq!(p.chosen_multiplier, 20.0);
        assert!((act(&p) - 4.0).abs() < 1e-12);
        assert_eq!(plan(&stub, &t, CostMode::WithUncertainty, 0.0).unwrap(), p);
    }

    #[test]
    fn modes_differ_by_mean_risk_margin() {
        let stub = Stub {
            models: 2,
            f: |_, m, _| if m == 0 { 100.0 } else { 125.0 },
        };
        let t = ActionTable::new(0.1, &[0.0], 4).unwrap();
        let with = plan(&stub, &t, CostMode::WithUncertainty, 0.0).unwrap();
        let without = plan(&stub, &t, CostMode::WithoutUncertainty, 0.0).unwrap();
        let rm = risk_margin(&[100.0, 125.0]).unwrap();
        let diff = with.per_sequence_costs[0] - without.per_sequence_costs[0];
        assert!((diff - rm).abs() < 1e-12);
        let mean_profile = with.risk_margin_profile.iter().sum::<f64>() / 4.0;
        assert!((diff - mean_profile).abs() < 1e-12);
        // degenerate ensemble: modes agree
        let flat = Stub {
            models: 2,
            f: |_, _, _| 112.5,
        };
        let a = plan(&flat, &t, CostMode::WithUncertainty, 0.0)
            .unwrap()
            .per_sequence_costs[0];
        let b = plan(&flat, &t, CostMode::WithoutUncertainty, 0.0)
            .unwrap()
            .per_sequence_costs[0];
        assert_eq!(a, b);
        assert!((a - risk(112.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn current_carbs_reach_the_predictor() {
        struct Spy;
        impl Predictor for Spy {
            fn predict(&self, seqs: &[Vec<f64>], carbs: &[f64]) -> Result<Vec<PredictionMatrix>> {
                assert_eq!(carbs[0], 42.0);
                assert!(carbs[1..].iter().all(|&c| c == 0.0));
                seqs.iter()
                    .map(|_| PredictionMatrix::new(1, carbs.len(), vec![150.0; carbs.len()]))
                    .collect()
            }
        }
        plan(
            &Spy,
            &build_action_table(0.1).unwrap(),
            CostMode::WithUncertainty,
            42.0,
        )
        .unwrap();
    }

    #[test]
    fn tie_break_prefers_smallest() {
        assert_eq!(select_argmin(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(select_argmin(&[2.0, 1.0, 1.0 + 1e-14]), 1);
        assert_eq!(select_argmin(&[f64::NAN, 3.0, 2.0]), 2);
    }

    proptest! {
        #[test]
        fn argmin_invariant_under_positive_scaling(
            costs in prop::collection::vec(0.0f64..100.0, 6),
            scale in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = costs.iter().map(|c| c * scale).collect();
            prop_assert_eq!(select_argmin(&costs), select_argmin(&scaled));
        }
    }
}
