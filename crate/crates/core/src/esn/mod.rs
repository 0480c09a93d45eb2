//! Leaky echo state networks.
//!
//! Hidden update and readout:
//!
//! ```text
//! x~(t) = tanh(W_in u(t) + W x(t-1))
//! x(t)  = (1 - a) x(t-1) + a x~(t)
//! y(t)  = W_out [x(t); u(t)]
//! ```
//!
//! `W_in` and `W` are drawn once from a seed and never change; only `W_out`
//! is learned, by ridge regression on accumulated `[x; u]` features.

mod ensemble;
mod reservoir;
mod ridge;

pub use ensemble::{member_seed, Ensemble, EnsembleSnapshot, Normalizer};
pub use reservoir::{
    activation, init_esn, readout, update_state, EsnState, EsnWeights, SparseMatrix,
};
pub use ridge::{fit_readout, FitOutcome, TrainingBuffer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs per step: bolus and carbs.
pub const INPUT_DIM: usize = 2;
/// Outputs per step: glucose.
pub const OUTPUT_DIM: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsnHyper {
    pub reservoir_size: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub leak_rate: f64,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub connectivity: f64,
    pub ridge: f64,
    /// steps at the start of each episode whose features are not recorded
    pub washout: usize,
    /// maximum rows kept in a training buffer
    pub buffer_capacity: usize,
}

impl Default for EsnHyper {
    fn default() -> Self {
        EsnHyper {
            reservoir_size: 200,
            input_dim: INPUT_DIM,
            output_dim: OUTPUT_DIM,
            leak_rate: 0.3,
            spectral_radius: 0.95,
            input_scale: 0.5,
            connectivity: 0.1,
            ridge: 1e-6,
            washout: 24,
            buffer_capacity: 100_000,
        }
    }
}

impl EsnHyper {
    pub fn feature_dim(&self) -> usize {
        self.reservoir_size + self.input_dim
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("esn: {m}")));
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return fail(format!("leak_rate {} outside (0, 1]", self.leak_rate));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return fail(format!(
                "spectral_radius {} outside (0, 1)",
                self.spectral_radius
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return fail("input_dim and output_dim must be positive".into());
        }
        if self.reservoir_size < self.input_dim {
            return fail(format!(
                "reservoir_size {} smaller than input_dim {}",
                self.reservoir_size, self.input_dim
            ));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return fail(format!("connectivity {} outside (0, 1]", self.connectivity));
        }
        if !(self.ridge >= 0.0) || !(self.input_scale > 0.0) {
            return fail("ridge must be >= 0 and input_scale > 0".into());
        }
        if self.buffer_capacity == 0 {
            return fail("buffer_capacity must be positive".into());
        }
        Ok(())
    }
}
