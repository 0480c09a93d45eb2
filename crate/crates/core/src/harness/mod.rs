//! Episode loop, training schedule, metrics and experiment orchestration.
//!
//! An episode is one day from 06:00 in 288 five-minute steps. Each step the
//! agent sees the latest CGM reading and any carbs eaten now, returns a
//! bolus, and the patient advances with basal plus bolus. The episode stops
//! early when true glucose leaves `[20, 600]` mg/dl.

mod agents;
mod config;
mod experiment;
mod metrics;
mod output;

pub use agents::{Agent, BbAgent, ConstantAgent, Decision, MbrlAgent, Observation, PlanSummary};
pub use config::{AgentKind, ExperimentConfig, NoiseConfig};
pub use experiment::{
    compare_uncertainty_modes, compare_uncertainty_modes_with, make_agent, run_experiment,
    run_experiment_with, sweep, train_and_evaluate, ExperimentRun, LearningCurve,
    UncertaintyComparison,
};
pub use metrics::{
    completion_rate, episode_tir, first_full_episode, median_first_full, summarize, time_in_range,
    MetricsReport, EVALUATION_WINDOW, TIR_EPISODES, TIR_HIGH, TIR_LOW,
};
pub use output::{
    curves_csv, read_metrics, render_tables, write_episode_csv, write_metrics, CSV_HEADER,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::member_seed;
use crate::mealgen::{carbs_per_step, sample_day, MealEvent, MealSpec, STEPS_PER_DAY};
use crate::risk::risk_clamped;
use crate::simcore::{
    steady_state, step_patient, CgmConfig, CgmSensor, PatientParams, STEP_MINUTES,
};

pub const HYPO_LIMIT: f64 = 20.0;
pub const HYPER_LIMIT: f64 = 600.0;
pub const EPISODE_STEPS: usize = STEPS_PER_DAY;
pub const START_MINUTE: usize = 6 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    HypoTerminated,
    HyperTerminated,
    /// the simulator produced a non-finite state
    Aborted,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::HypoTerminated => "hypo_terminated",
            Termination::HyperTerminated => "hyper_terminated",
            Termination::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// minute of day at which the glucose was read (end of the step)
    pub minute_of_day: usize,
    pub true_bg: f64,
    pub cgm: f64,
    pub carbs_g: f64,
    pub bolus_u: f64,
    pub basal_u: f64,
    /// risk of the CGM reading
    pub cost: f64,
    pub plan: Option<PlanSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub agent: String,
    pub meals: Vec<MealEvent>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub duration_steps: usize,
    /// set when the episode was aborted
    pub diagnostic: Option<String>,
}

impl EpisodeLog {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn cgm_trace(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.cgm)
    }

    /// Carbs actually delivered to the patient.
    pub fn carbs_consumed(&self) -> f64 {
        self.steps.iter().map(|s| s.carbs_g).sum()
    }
}

/// Per-episode random streams derived from a master seed.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSeeds {
    pub meals: u64,
    pub cgm: u64,
}

impl EpisodeSeeds {
    pub fn derive(master: u64, episode: usize) -> Self {
        let base = member_seed(master, episode);
        EpisodeSeeds {
            meals: member_seed(base, 0),
            cgm: member_seed(base, 1),
        }
    }
}

/// Runs one day. Meals are sampled up front from `meal_specs`.
pub fn run_episode(
    agent: &mut dyn Agent,
    params: &PatientParams,
    meal_specs: &[MealSpec],
    noise: &NoiseConfig,
    episode: usize,
    seeds: EpisodeSeeds,
) -> Result<EpisodeLog> {
    let mut meal_rng = ChaCha8Rng::seed_from_u64(seeds.meals);
    let meals = sample_day(meal_specs, &mut meal_rng);
    let schedule = carbs_per_step(&meals, EPISODE_STEPS);
    let cgm_config = CgmConfig {
        noise_std: noise.noise_std,
        noise_correlation: noise.noise_correlation,
        seed: seeds.cgm,
    };
    let mut sensor = CgmSensor::new(cgm_config);

    agent.begin_episode(episode)?;
    let mut state = steady_state(params);
    let mut cgm = sensor.read(state.plasma_glucose);
    let mut insulin_prev = params.basal_rate;
    let mut steps = Vec::with_capacity(EPISODE_STEPS);
    let mut termination = Termination::Completed;
    let mut diagnostic = None;

    for (k, &carbs) in schedule.iter().enumerate() {
        let obs = Observation {
            step: k,
            cgm,
            carbs,
            insulin_prev,
        };
        let decision = agent.act(&obs)?;
        let bolus = decision.bolus.max(0.0);
        let basal = decision.basal.unwrap_or(params.basal_rate).max(0.0);
        let insulin = basal + bolus;
        let (next, true_bg) = match step_patient(&state, params, insulin, carbs, STEP_MINUTES) {
            Ok(v) => v,
            Err(e) => {
                termination = Termination::Aborted;
                diagnostic = Some(e.to_string());
                break;
            }
        };
        state = next;
        cgm = sensor.read(true_bg);
        insulin_prev = insulin;
        agent.feedback(bolus, carbs, cgm);
        steps.push(StepRecord {
            step: k,
            minute_of_day: (START_MINUTE + (k + 1) * STEP_MINUTES as usize) % (24 * 60),
            true_bg,
            cgm,
            carbs_g: carbs,
            bolus_u: bolus,
            basal_u: basal,
            cost: risk_clamped(cgm),
            plan: decision.plan,
        });
        if true_bg < HYPO_LIMIT {
            termination = Termination::HypoTerminated;
            break;
        }
        if true_bg > HYPER_LIMIT {
            termination = Termination::HyperTerminated;
            break;
        }
    }
    let log = EpisodeLog {
        episode,
        agent: agent.name().to_string(),
        meals,
        duration_steps: steps.len(),
        steps,
        termination,
        diagnostic,
    };
    agent.end_episode(&log)?;
    Ok(log)
}

/// Runs `episodes` consecutive episodes with one agent.
pub fn run_episodes(
    agent: &mut dyn Agent,
    params: &PatientParams,
    meal_specs: &[MealSpec],
    noise: &NoiseConfig,
    episodes: usize,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<Vec<EpisodeLog>> {
    (0..episodes)
        .map(|ep| {
            let log = run_episode(
                agent,
                params,
                meal_specs,
                noise,
                ep,
                EpisodeSeeds::derive(seed, ep),
            )?;
            on_episode(&log);
            Ok(log)
        })
        .collect()
}

pub(crate) fn check_episodes(episodes: usize) -> Result<()> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mealgen::default_specs;
    use crate::profiles::bb_params;
    use crate::simcore::{make_profile, AgeGroup};

    fn adult() -> PatientParams {
        make_profile(AgeGroup::Adult, 1).unwrap()
    }

    #[test]
    fn bb_completes_a_day() {
        let p = adult();
        let mut agent = BbAgent::new(bb_params(&p));
        let log = run_episode(
            &mut agent,
            &p,
            &default_specs(),
            &NoiseConfig::default(),
            0,
            EpisodeSeeds::derive(1, 0),
        )
        .unwrap();
        assert_eq!(log.termination, Termination::Completed);
        assert_eq!(log.duration_steps, 288);
        assert_eq!(log.steps.last().unwrap().minute_of_day, 360);
    }

    #[test]
    fn no_insulin_goes_hyper() {
        let p = adult();
        let mut agent = ConstantAgent::no_insulin();
        let log = run_episode(
            &mut agent,
            &p,
            &default_specs(),
            &NoiseConfig::default(),
            0,
            EpisodeSeeds::derive(2, 0),
        )
        .unwrap();
        assert_eq!(log.termination, Termination::HyperTerminated);
        assert!(log.duration_steps < 288);
    }

    #[test]
    fn insulin_flood_goes_hypo() {
        let p = adult();
        let mut agent = ConstantAgent::new("flood", 99.0 * p.basal_rate);
        let log = run_episode(
            &mut agent,
            &p,
            &default_specs(),
            &NoiseConfig::default(),
            0,
            EpisodeSeeds::derive(3, 0),
        )
        .unwrap();
        assert_eq!(log.termination, Termination::HypoTerminated);
    }

    #[test]
    fn termination_matches_trace() {
        let p = adult();
        let agents = [
            ConstantAgent::no_insulin(),
            ConstantAgent::new("flood", 99.0 * p.basal_rate),
            ConstantAgent::new("basal", 0.0),
        ];
        for (mut agent, seed) in agents.into_iter().zip(4..) {
            let log = run_episode(
                &mut agent,
                &p,
                &default_specs(),
                &NoiseConfig::default(),
                0,
                EpisodeSeeds::derive(seed, 0),
            )
            .unwrap();
            let out_of_bounds = |bg: f64| !(HYPO_LIMIT..=HYPER_LIMIT).contains(&bg);
            let (last, earlier) = log.steps.split_last().unwrap();
            assert!(earlier.iter().all(|s| !out_of_bounds(s.true_bg)));
            assert_eq!(out_of_bounds(last.true_bg), !log.completed());
        }
    }

    #[test]
    fn meals_are_conserved() {
        let p = adult();
        let mut agent = BbAgent::new(bb_params(&p));
        let log = run_episode(
            &mut agent,
            &p,
            &default_specs(),
            &NoiseConfig::default(),
            0,
            EpisodeSeeds::derive(7, 0),
        )
        .unwrap();
        let sampled: f64 = log.meals.iter().map(|m| m.carbs).sum();
        assert!((sampled - log.carbs_consumed()).abs() < 1e-9);
    }
}
