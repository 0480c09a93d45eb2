//! Glucose risk cost and ensemble cost statistics.
//!
//! The risk function is `15.09 * (ln(bg)^1.084 - 5.381)^2` with the natural
//! logarithm, which puts the minimum near 112.5 mg/dl and makes a rise from
//! 180 to 250 cost about as much as a fall from 70 to 50.

use crate::error::{Error, Result};
use crate::simcore::{BG_CEIL, BG_FLOOR};

const SCALE: f64 = 15.09;
const EXPONENT: f64 = 1.084;
const OFFSET: f64 = 5.381;

/// Risk of a single glucose value (mg/dl). Values are clamped to
/// `[1, 1000]` first; non-positive or non-finite input is rejected.
pub fn risk(bgl: f64) -> Result<f64> {
    if !(bgl > 0.0) || !bgl.is_finite() {
        return Err(Error::InvalidInput(format!(
            "glucose must be positive, got {bgl}"
        )));
    }
    Ok(risk_clamped(bgl))
}

/// Risk after clamping into `[1, 1000]`; NaN maps to the ceiling.
#[inline]
pub fn risk_clamped(bgl: f64) -> f64 {
    let bg = if bgl.is_nan() {
        BG_CEIL
    } else {
        bgl.clamp(BG_FLOOR, BG_CEIL)
    };
    let d = bg.ln().powf(EXPONENT) - OFFSET;
    SCALE * d * d
}

/// Glucose where the risk is zero: `exp(5.381^(1/1.084))`.
pub fn risk_minimum() -> f64 {
    OFFSET.powf(1.0 / EXPONENT).exp()
}

/// M × T grid of predicted glucose (models × horizon steps), row-major by
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    models: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(models: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != models * horizon {
            return Err(Error::InvalidInput(format!(
                "prediction matrix {models}x{horizon} given {} values",
                values.len()
            )));
        }
        let values = values
            .into_iter()
            .map(|v| {
                if v.is_nan() {
                    BG_CEIL
                } else {
                    v.clamp(BG_FLOOR, BG_CEIL)
                }
            })
            .collect();
        Ok(PredictionMatrix {
            models,
            horizon,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::InvalidInput("ragged prediction rows".into()));
        }
        PredictionMatrix::new(rows.len(), horizon, rows.concat())
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, model: usize) -> &[f64] {
        &self.values[model * self.horizon..(model + 1) * self.horizon]
    }

    pub fn get(&self, model: usize, t: usize) -> f64 {
        self.values[model * self.horizon + t]
    }

    /// All M predictions at step `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.models).map(|m| self.get(m, t)).collect()
    }

    /// Ensemble mean at each step.
    pub fn mean_trajectory(&self) -> Vec<f64> {
        (0..self.horizon)
            .map(|t| (0..self.models).map(|m| self.get(m, t)).sum::<f64>() / self.models as f64)
            .collect()
    }

    /// Ensemble standard deviation (population) at each step.
    pub fn spread(&self) -> Vec<f64> {
        let mean = self.mean_trajectory();
        (0..self.horizon)
            .map(|t| {
                let var = (0..self.models)
                    .map(|m| (self.get(m, t) - mean[t]).powi(2))
                    .sum::<f64>()
                    / self.models as f64;
                var.sqrt()
            })
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean risk over every entry of the grid.
pub fn mean_ensemble_cost(preds: &PredictionMatrix) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("empty prediction matrix".into()));
    }
    Ok(preds.values.iter().map(|&v| risk_clamped(v)).sum::<f64>() / preds.values.len() as f64)
}

/// Mean over steps of the risk of the ensemble-mean prediction.
pub fn cost_of_mean(preds: &PredictionMatrix) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("empty prediction matrix".into()));
    }
    let mean = preds.mean_trajectory();
    Ok(mean.iter().map(|&v| risk_clamped(v)).sum::<f64>() / mean.len() as f64)
}

/// `E[c(bg)] - c(E[bg])` over the M predictions for one step.
pub fn risk_margin(preds_at_t: &[f64]) -> Result<f64> {
    if preds_at_t.is_empty() {
        return Err(Error::InvalidInput("risk margin of no predictions".into()));
    }
    let n = preds_at_t.len() as f64;
    let mean_cost = preds_at_t.iter().map(|&v| risk_clamped(v)).sum::<f64>() / n;
    let mean_bg = preds_at_t.iter().sum::<f64>() / n;
    Ok(mean_cost - risk_clamped(mean_bg))
}

/// Risk margin at every step of the horizon.
pub fn risk_margin_profile(preds: &PredictionMatrix) -> Vec<f64> {
    (0..preds.horizon())
        .map(|t| risk_margin(&preds.column(t)).expect("models >= 1"))
        .collect()
}
