//! The shipped virtual-person parameter file.
//!
//! `data/profiles.toml` lists, for each of the nine people, the patient
//! physiology and the basal-bolus settings. It is generated from
//! [`builtin`] by `gluco profiles` and checked against it in tests.

use serde::{Deserialize, Serialize};

use crate::baselines::{BbParams, DEFAULT_TARGET_BG};
use crate::error::{Error, Result};
use crate::simcore::{profile, PatientParams, ProfileId};

pub const PROFILES_TOML: &str = include_str!("../data/profiles.toml");

/// Carbohydrate ratio as a multiple of the glucose-area balance point.
const CR_CALIBRATION: f64 = 1.0;
/// Correction factor as a multiple of the glucose-area balance point.
const CF_CALIBRATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub params: PatientParams,
    pub bb: BbParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub profile: Vec<ProfileEntry>,
}

/// Basal-bolus settings for a patient.
///
/// A bolus of `B` units removes about `S * G_eq * B / n` mg/dl·min of
/// glucose area, and `c` grams add `glucose_per_gram * c`; the carbohydrate
/// ratio balances the two and the correction factor is the area removed per
/// unit. Both are then scaled by hand-tuned calibration constants.
pub fn bb_params(p: &PatientParams) -> BbParams {
    let area_per_unit = p.insulin_sensitivity * p.equilibrium_bg / p.insulin_clearance_rate;
    BbParams {
        bas: p.basal_rate,
        cr: CR_CALIBRATION * area_per_unit / p.glucose_per_gram(),
        cf: CF_CALIBRATION * area_per_unit,
        target_bg: DEFAULT_TARGET_BG,
    }
}

pub fn builtin() -> ProfileFile {
    ProfileFile {
        profile: ProfileId::all()
            .map(|id| {
                let params = profile(id);
                let bb = bb_params(&params);
                ProfileEntry { params, bb }
            })
            .collect(),
    }
}

impl ProfileFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for e in &file.profile {
            e.params.validate()?;
            e.bb.validate()?;
        }
        Ok(file)
    }

    pub fn shipped() -> Self {
        ProfileFile::parse(PROFILES_TOML).expect("shipped profile file is valid")
    }

    pub fn get(&self, id: ProfileId) -> Option<&ProfileEntry> {
        self.profile.iter().find(|e| e.params.profile_id == id)
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string(self).expect("profiles serialize");
        format!("{HEADER}\n{body}")
    }
}

const HEADER: &str = "\
# Virtual-person parameters. Generated by `gluco profiles`; do not edit by hand.
#
# [profile.params]
#   body_mass                kg
#   basal_rate               insulin-units per 5-minute step
#   insulin_sensitivity      remote insulin effect (1/min) per unit of plasma insulin
#   carb_absorption_rate     1/min, both gut compartments
#   insulin_action_rate      1/min, plasma to remote insulin effect
#   insulin_clearance_rate   1/min, plasma insulin decay
#   glucose_self_regulation  1/min, insulin-independent glucose uptake
#   endogenous_production    mg/dl/min, balances basal insulin at equilibrium_bg
#   equilibrium_bg           mg/dl
# [profile.bb]
#   bas        basal insulin-units per step
#   cr         grams per insulin-unit
#   cf         mg/dl per insulin-unit
#   target_bg  mg/dl
";
