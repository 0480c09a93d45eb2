use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agents::{Agent, BbAgent, MbrlAgent};
use super::config::{AgentKind, ExperimentConfig};
use super::metrics::{median_first_full, summarize, MetricsReport};
use super::output::{write_episode_csv, write_metrics};
use super::{run_episodes, EpisodeLog};
use crate::error::{Error, Result};
use crate::esn::{member_seed, Ensemble, Normalizer};
use crate::planner::{ActionTable, DEFAULT_MULTIPLIERS};
use crate::profiles::{ProfileEntry, ProfileFile};
use crate::simcore::ProfileId;

/// Salt separating the ensemble seed from the episode streams.
const ENSEMBLE_SALT: u64 = 0x5EED_E5A0;

pub fn make_agent(config: &ExperimentConfig, entry: &ProfileEntry) -> Result<Box<dyn Agent>> {
    let bb = BbAgent::new(entry.bb);
    let Some(mode) = config.agent.cost_mode() else {
        return Ok(Box::new(bb));
    };
    let basal = entry.params.basal_rate;
    let ensemble = Ensemble::init_ensemble(
        config.esn.clone(),
        Normalizer::for_basal(basal),
        config.ensemble_size,
        member_seed(config.seed ^ ENSEMBLE_SALT, 0),
    )?;
    let table = ActionTable::new(basal, &DEFAULT_MULTIPLIERS, config.horizon)?;
    Ok(Box::new(MbrlAgent::new(
        ensemble,
        table,
        mode,
        bb,
        config.warmup_episodes,
    )))
}

fn lookup(id: ProfileId) -> Result<ProfileEntry> {
    ProfileFile::shipped()
        .get(id)
        .cloned()
        .ok_or_else(|| Error::InvalidProfile(format!("{id} is not in the profile file")))
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: MetricsReport,
    pub logs: Vec<EpisodeLog>,
}

/// Runs the configured schedule and, when `output_dir` is set, writes one
/// CSV per episode plus `metrics.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    run_experiment_with(config, |_| {})
}

/// As [`run_experiment`], calling `progress` after every episode.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    progress: impl FnMut(&EpisodeLog),
) -> Result<ExperimentRun> {
    config.validate()?;
    let entry = lookup(config.profile)?;
    let mut agent = make_agent(config, &entry)?;
    let logs = run_episodes(
        agent.as_mut(),
        &entry.params,
        &config.meal_specs(),
        &config.cgm,
        config.episodes,
        config.seed,
        progress,
    )?;
    let report = summarize(
        config.profile,
        config.agent,
        config.seed,
        config.warmup_episodes,
        &logs,
    );
    if let Some(dir) = &config.output_dir {
        write_run(dir, config, &report, &logs)?;
    }
    Ok(ExperimentRun { report, logs })
}

fn write_run(
    dir: &Path,
    config: &ExperimentConfig,
    report: &MetricsReport,
    logs: &[EpisodeLog],
) -> Result<()> {
    let episodes = dir.join("episodes");
    std::fs::create_dir_all(&episodes).map_err(|e| Error::io(&episodes, e))?;
    for log in logs {
        write_episode_csv(
            log,
            &episodes.join(format!("episode_{:04}.csv", log.episode)),
        )?;
    }
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    write_metrics(report, &dir.join("metrics.json"))
}

pub fn train_and_evaluate(config: &ExperimentConfig) -> Result<MetricsReport> {
    Ok(run_experiment(config)?.report)
}

/// Every profile × agent cell of `base`, each in its own output
/// subdirectory `<profile>_<agent>` when `base.output_dir` is set.
pub fn sweep(
    base: &ExperimentConfig,
    profiles: &[ProfileId],
    agents: &[AgentKind],
) -> Result<Vec<MetricsReport>> {
    let mut reports = Vec::with_capacity(profiles.len() * agents.len());
    for &profile in profiles {
        for &agent in agents {
            let mut cfg = base.clone();
            cfg.profile = profile;
            cfg.agent = agent;
            cfg.output_dir = base.output_dir.as_ref().map(|d| {
                d.join(format!(
                    "{}_{}",
                    profile.to_string().replace('#', ""),
                    agent
                ))
            });
            reports.push(train_and_evaluate(&cfg)?);
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: u64,
    pub durations: Vec<usize>,
    pub tir: Vec<f64>,
    pub first_full_episode: Option<usize>,
    pub completion_rate_pct: f64,
    pub time_in_range_pct: Option<f64>,
}

impl From<&MetricsReport> for LearningCurve {
    fn from(r: &MetricsReport) -> Self {
        LearningCurve {
            seed: r.seed,
            durations: r.durations.clone(),
            tir: r.tir_per_episode.clone(),
            first_full_episode: r.first_full_episode,
            completion_rate_pct: r.completion_rate_pct,
            time_in_range_pct: r.time_in_range_pct,
        }
    }
}

/// Paired learning curves of the two planner cost modes over shared seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyComparison {
    pub profile: ProfileId,
    pub episodes: usize,
    pub with_uncertainty: Vec<LearningCurve>,
    pub without_uncertainty: Vec<LearningCurve>,
}

impl UncertaintyComparison {
    /// Median first full-day episode; runs that never complete count as
    /// `episodes`.
    pub fn median_first_full(&self, with_uncertainty: bool) -> f64 {
        let curves = if with_uncertainty {
            &self.with_uncertainty
        } else {
            &self.without_uncertainty
        };
        let firsts: Vec<Option<usize>> = curves.iter().map(|c| c.first_full_episode).collect();
        median_first_full(&firsts, self.episodes)
    }

    /// Mean over seeds of the final time in range; runs without a completed
    /// episode in the window count as 0.
    pub fn mean_final_tir(&self, with_uncertainty: bool) -> f64 {
        let curves = if with_uncertainty {
            &self.with_uncertainty
        } else {
            &self.without_uncertainty
        };
        if curves.is_empty() {
            return 0.0;
        }
        curves
            .iter()
            .map(|c| c.time_in_range_pct.unwrap_or(0.0))
            .sum::<f64>()
            / curves.len() as f64
    }
}

/// Runs both planner modes of `base` for every seed.
pub fn compare_uncertainty_modes(
    base: &ExperimentConfig,
    seeds: &[u64],
) -> Result<UncertaintyComparison> {
    compare_uncertainty_modes_with(base, seeds, train_and_evaluate)
}

/// As [`compare_uncertainty_modes`] with a caller-supplied runner, e.g. one
/// that caches runs shared with other experiments.
pub fn compare_uncertainty_modes_with(
    base: &ExperimentConfig,
    seeds: &[u64],
    mut runner: impl FnMut(&ExperimentConfig) -> Result<MetricsReport>,
) -> Result<UncertaintyComparison> {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for &seed in seeds {
        for agent in [
            AgentKind::MbrlWithUncertainty,
            AgentKind::MbrlWithoutUncertainty,
        ] {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.agent = agent;
            cfg.output_dir = None;
            let report = runner(&cfg)?;
            let curve = LearningCurve::from(&report);
            if agent == AgentKind::MbrlWithUncertainty {
                with.push(curve);
            } else {
                without.push(curve);
            }
        }
    }
    Ok(UncertaintyComparison {
        profile: base.profile,
        episodes: base.episodes,
        with_uncertainty: with,
        without_uncertainty: without,
    })
}
