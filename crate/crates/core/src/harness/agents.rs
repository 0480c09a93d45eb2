use serde::{Deserialize, Serialize};

use super::EpisodeLog;
use crate::baselines::{bb_dose, BbParams};
use crate::error::Result;
use crate::esn::Ensemble;
use crate::planner::{plan, ActionTable, CostMode};

/// What the agent sees at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub step: usize,
    /// latest CGM reading, mg/dl
    pub cgm: f64,
    /// carbs eaten at this step, known only now
    pub carbs: f64,
    /// total insulin delivered over the previous step
    pub insulin_prev: f64,
}

/// Compact record of one planning step for the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub chosen_multiplier: f64,
    pub costs: Vec<f64>,
    /// ensemble mean and spread of the chosen sequence, first and last step
    pub mean_first: f64,
    pub mean_last: f64,
    pub spread_first: f64,
    pub spread_last: f64,
    pub mean_risk_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub bolus: f64,
    /// replaces the profile basal for this step (test stubs only)
    pub basal: Option<f64>,
    pub plan: Option<PlanSummary>,
}

impl Decision {
    pub fn bolus(bolus: f64) -> Self {
        Decision {
            bolus,
            ..Decision::default()
        }
    }
}

pub trait Agent {
    fn name(&self) -> &str;

    fn begin_episode(&mut self, _episode: usize) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision>;

    /// The realized step: bolus given, carbs eaten and the resulting CGM.
    fn feedback(&mut self, _bolus: f64, _carbs: f64, _cgm: f64) {}

    fn end_episode(&mut self, _log: &EpisodeLog) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BbAgent {
    params: BbParams,
}

impl BbAgent {
    pub fn new(params: BbParams) -> Self {
        BbAgent { params }
    }

    /// Bolus on top of basal.
    pub fn bolus(&self, cgm: f64, carbs: f64) -> f64 {
        (bb_dose(&self.params, cgm, carbs) - self.params.bas).max(0.0)
    }
}

impl Agent for BbAgent {
    fn name(&self) -> &str {
        "bb"
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        Ok(Decision::bolus(self.bolus(obs.cgm, obs.carbs)))
    }
}

/// Fixed bolus every step; optionally withholds basal.
#[derive(Debug, Clone)]
pub struct ConstantAgent {
    name: String,
    bolus: f64,
    basal: Option<f64>,
}

impl ConstantAgent {
    pub fn new(name: &str, bolus: f64) -> Self {
        ConstantAgent {
            name: name.to_string(),
            bolus,
            basal: None,
        }
    }

    /// No bolus and no basal.
    pub fn no_insulin() -> Self {
        ConstantAgent {
            name: "no_insulin".into(),
            bolus: 0.0,
            basal: Some(0.0),
        }
    }
}

impl Agent for ConstantAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, _obs: &Observation) -> Result<Decision> {
        Ok(Decision {
            bolus: self.bolus,
            basal: self.basal,
            plan: None,
        })
    }
}

/// Ensemble-ESN model predictive controller.
///
/// The first `warmup_episodes` episodes are driven by the basal-bolus
/// controller to collect data; the readouts are refit after every episode
/// and the planner takes over once all members are fitted.
#[derive(Debug, Clone)]
pub struct MbrlAgent {
    name: &'static str,
    ensemble: Ensemble,
    table: ActionTable,
    mode: CostMode,
    bootstrap: BbAgent,
    warmup_episodes: usize,
    episode: usize,
}

impl MbrlAgent {
    pub fn new(
        ensemble: Ensemble,
        table: ActionTable,
        mode: CostMode,
        bootstrap: BbAgent,
        warmup_episodes: usize,
    ) -> Self {
        let name = match mode {
            CostMode::WithUncertainty => "mbrl_with_uncertainty",
            CostMode::WithoutUncertainty => "mbrl_without_uncertainty",
        };
        MbrlAgent {
            name,
            ensemble,
            table,
            mode,
            bootstrap,
            warmup_episodes,
            episode: 0,
        }
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn mode(&self) -> CostMode {
        self.mode
    }

    /// True while the basal-bolus bootstrap is in control.
    pub fn in_warmup(&self) -> bool {
        self.episode < self.warmup_episodes || !self.ensemble.is_fitted()
    }
}

impl Agent for MbrlAgent {
    fn name(&self) -> &str {
        self.name
    }

    fn begin_episode(&mut self, episode: usize) -> Result<()> {
        self.episode = episode;
        self.ensemble.reset_states();
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        if self.in_warmup() {
            return Ok(Decision::bolus(self.bootstrap.bolus(obs.cgm, obs.carbs)));
        }
        let p = plan(&self.ensemble, &self.table, self.mode, obs.carbs)?;
        let mean = p.prediction_matrix.mean_trajectory();
        let spread = p.prediction_matrix.spread();
        let summary = PlanSummary {
            chosen_multiplier: p.chosen_multiplier,
            costs: p.per_sequence_costs.clone(),
            mean_first: mean[0],
            mean_last: *mean.last().expect("horizon >= 1"),
            spread_first: spread[0],
            spread_last: *spread.last().expect("horizon >= 1"),
            mean_risk_margin: p.risk_margin_profile.iter().sum::<f64>()
                / p.risk_margin_profile.len() as f64,
        };
        Ok(Decision {
            bolus: p.chosen_bolus,
            basal: None,
            plan: Some(summary),
        })
    }

    fn feedback(&mut self, bolus: f64, carbs: f64, cgm: f64) {
        self.ensemble.advance(bolus, carbs);
        self.ensemble.record(cgm);
    }

    fn end_episode(&mut self, _log: &EpisodeLog) -> Result<()> {
        self.ensemble.fit()?;
        Ok(())
    }
}
