use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::EsnHyper;
use crate::mealgen::{default_specs, MealSpec};
use crate::planner::{CostMode, DEFAULT_HORIZON};
use crate::simcore::ProfileId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bb,
    MbrlWithUncertainty,
    MbrlWithoutUncertainty,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [
        AgentKind::Bb,
        AgentKind::MbrlWithUncertainty,
        AgentKind::MbrlWithoutUncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Bb => "bb",
            AgentKind::MbrlWithUncertainty => "mbrl_with_uncertainty",
            AgentKind::MbrlWithoutUncertainty => "mbrl_without_uncertainty",
        }
    }

    /// Column heading in the summary tables.
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Bb => "BBController",
            AgentKind::MbrlWithUncertainty => "MBRL",
            AgentKind::MbrlWithoutUncertainty => "MBRL (no uncertainty)",
        }
    }

    pub fn cost_mode(self) -> Option<CostMode> {
        match self {
            AgentKind::Bb => None,
            AgentKind::MbrlWithUncertainty => Some(CostMode::WithUncertainty),
            AgentKind::MbrlWithoutUncertainty => Some(CostMode::WithoutUncertainty),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bb" => Ok(AgentKind::Bb),
            "mbrl" | "mbrl_with_uncertainty" => Ok(AgentKind::MbrlWithUncertainty),
            "mbrl_without_uncertainty" => Ok(AgentKind::MbrlWithoutUncertainty),
            other => Err(Error::Config(format!(
                "unknown agent {other:?}; expected bb, mbrl_with_uncertainty or mbrl_without_uncertainty"
            ))),
        }
    }
}

/// CGM error model; the per-episode noise seed derives from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub noise_std: f64,
    pub noise_correlation: f64,
}

fn default_warmup() -> usize {
    5
}

fn default_ensemble_size() -> usize {
    5
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

/// One experiment: a profile, an agent and a schedule.
///
/// Read from TOML; every field is named and unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: ProfileId,
    pub agent: AgentKind,
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cgm: NoiseConfig,
    /// replaces the default meal table when present
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meals: Option<Vec<MealSpec>>,
    #[serde(default)]
    pub esn: EsnHyper,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_warmup")]
    pub warmup_episodes: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(profile: ProfileId, agent: AgentKind, episodes: usize, seed: u64) -> Self {
        ExperimentConfig {
            profile,
            agent,
            episodes,
            seed,
            cgm: NoiseConfig::default(),
            meals: None,
            esn: EsnHyper::default(),
            horizon: DEFAULT_HORIZON,
            warmup_episodes: default_warmup(),
            ensemble_size: default_ensemble_size(),
            output_dir: None,
        }
    }

    pub fn meal_specs(&self) -> Vec<MealSpec> {
        self.meals.clone().unwrap_or_else(default_specs)
    }

    pub fn validate(&self) -> Result<()> {
        super::check_episodes(self.episodes)?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be >= 1".into()));
        }
        crate::simcore::CgmConfig {
            noise_std: self.cgm.noise_std,
            noise_correlation: self.cgm.noise_correlation,
            seed: 0,
        }
        .validate()?;
        for spec in self.meal_specs() {
            spec.validate()?;
        }
        self.esn.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg =
            ExperimentConfig::parse("profile = \"adult#001\"\nagent = \"bb\"\nepisodes = 30\n")
                .unwrap();
        assert_eq!(cfg.agent, AgentKind::Bb);
        assert_eq!(cfg.horizon, 48);
        assert_eq!(cfg.esn, EsnHyper::default());
        assert_eq!(cfg.meal_specs().len(), 6);
    }

    #[test]
    fn missing_profile_named() {
        let err = ExperimentConfig::parse("agent = \"bb\"\nepisodes = 3\n").unwrap_err();
        assert!(err.to_string().contains("profile"), "{err}");
    }

    #[test]
    fn unknown_field_rejected_with_line() {
        let err = ExperimentConfig::parse(
            "profile = \"adult#001\"\nagent = \"bb\"\nepisodes = 3\ncolour = 1\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("colour") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn partial_esn_override() {
        let cfg = ExperimentConfig::parse(
            "profile = \"child#2\"\nagent = \"mbrl_without_uncertainty\"\nepisodes = 3\n[esn]\nreservoir_size = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.esn.reservoir_size, 50);
        assert_eq!(cfg.esn.leak_rate, EsnHyper::default().leak_rate);
    }

    #[test]
    fn zero_episodes_rejected() {
        assert!(
            ExperimentConfig::parse("profile = \"adult#001\"\nagent = \"bb\"\nepisodes = 0\n")
                .is_err()
        );
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::new(
            "adult#002".parse().unwrap(),
            AgentKind::MbrlWithUncertainty,
            10,
            4,
        );
        cfg.meals = Some(default_specs());
        cfg.output_dir = Some("out".into());
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
