//! Basal-bolus controller.
//!
//! The dose formula is
//! `bas + [c > 0] * (c / CR + [b > 150] * (b - b_tgt) / CF)`;
//! the correction term only fires at a meal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Glucose above which the correction term applies, mg/dl.
pub const CORRECTION_THRESHOLD: f64 = 150.0;
pub const DEFAULT_TARGET_BG: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BbParams {
    /// basal insulin-units per step
    pub bas: f64,
    /// carbohydrate ratio, grams per insulin-unit
    pub cr: f64,
    /// correction factor, mg/dl per insulin-unit
    pub cf: f64,
    /// target glucose, mg/dl
    pub target_bg: f64,
}

impl BbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cr > 0.0 && self.cf > 0.0 && self.bas >= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "basal-bolus parameters need cr > 0, cf > 0, bas >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Total insulin (basal included) for one step given the CGM reading `bg`
/// and the carbs eaten this step.
pub fn bb_dose(params: &BbParams, bg: f64, carbs: f64) -> f64 {
    let mut dose = params.bas;
    if carbs > 0.0 {
        dose += carbs / params.cr;
        if bg > CORRECTION_THRESHOLD {
            dose += (bg - params.target_bg) / params.cf;
        }
    }
    dose
}
