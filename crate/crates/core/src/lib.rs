//! Closed-loop blood glucose control with ensemble echo state networks and
//! model predictive control.
//!
//! The crate bundles everything an experiment needs:
//!
//! * [`simcore`]: a compartmental virtual patient with CGM readout
//! * [`mealgen`]: stochastic daily meal schedules
//! * [`risk`]: the glucose risk cost and ensemble cost statistics
//! * [`esn`]: leaky echo state networks, ridge readouts and ensembles
//! * [`planner`]: fixed-table receding-horizon controller
//! * [`baselines`]: the basal-bolus controller
//! * [`harness`]: episode loop, training schedule, metrics and reports

// NaN must fail validation, so checks are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod esn;
pub mod harness;
pub mod mealgen;
pub mod planner;
pub mod profiles;
pub mod risk;
pub mod simcore;

pub use baselines::{bb_dose, BbParams};
pub use error::{Error, Result};
pub use esn::{Ensemble, EsnHyper, EsnState, EsnWeights, TrainingBuffer};
pub use harness::{AgentKind, EpisodeLog, ExperimentConfig, MetricsReport, Termination};
pub use mealgen::{MealEvent, MealSpec};
pub use planner::{ActionTable, CostMode, Plan};
pub use risk::PredictionMatrix;
pub use simcore::{AgeGroup, CgmConfig, PatientParams, PatientState, ProfileId};
