//! Compartmental virtual patient.
//!
//! The model has three coupled subsystems, each a small linear or bilinear
//! ODE integrated per minute:
//!
//! ```text
//! gut:      dQ1/dt = -ka*Q1                 dQ2/dt = ka*Q1 - ka*Q2
//!           Ra     = 1000 * F * ka * Q2 / (Vg * BW)           [mg/dl/min]
//! insulin:  dI/dt  = r(t) - n*I                               r = dose / step length
//!           dX/dt  = p2 * (S*I - X)
//! glucose:  dG/dt  = EGP - (p1 + X) * G + Ra
//! ```
//!
//! `EGP` is fixed by the profile so that basal infusion with no carbs holds
//! `G` at `equilibrium_bg`. Insulin is measured in abstract insulin-units;
//! `basal_rate` is the dose delivered per 5-minute step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment step length in minutes.
pub const STEP_MINUTES: f64 = 5.0;
/// Integrator substep in minutes.
pub const SUBSTEP_MINUTES: f64 = 1.0;
/// Glucose is clamped to this range inside the integrator.
pub const BG_FLOOR: f64 = 1.0;
pub const BG_CEIL: f64 = 1000.0;

/// Fraction of ingested carbohydrate that reaches plasma.
pub const CARB_BIOAVAILABILITY: f64 = 0.9;
/// Glucose distribution volume, dl per kg body mass.
pub const GLUCOSE_VOLUME_DL_PER_KG: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Adolescent,
    Adult,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Child, AgeGroup::Adolescent, AgeGroup::Adult];

    pub fn name(self) -> &'static str {
        match self {
            AgeGroup::Child => "child",
            AgeGroup::Adolescent => "adolescent",
            AgeGroup::Adult => "adult",
        }
    }
}

/// A virtual person, e.g. `adult#001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileId {
    pub group: AgeGroup,
    pub index: u8,
}

impl ProfileId {
    pub fn new(group: AgeGroup, index: u8) -> Result<Self> {
        if !(1..=3).contains(&index) {
            return Err(Error::InvalidProfile(format!(
                "{}#{index}: index must be 1..=3",
                group.name()
            )));
        }
        Ok(ProfileId { group, index })
    }

    pub fn all() -> impl Iterator<Item = ProfileId> {
        AgeGroup::ALL
            .into_iter()
            .flat_map(|group| (1..=3).map(move |index| ProfileId { group, index }))
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{:03}", self.group.name(), self.index)
    }
}

impl FromStr for ProfileId {
    type Err = Error;

    /// Accepts `adult#001`, `adult#1` and `adult1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| c == '#' || c.is_ascii_digit())
            .ok_or_else(|| Error::InvalidProfile(format!("{s:?}: missing index")))?;
        let (name, rest) = s.split_at(split);
        let group = match name.to_ascii_lowercase().as_str() {
            "child" => AgeGroup::Child,
            "adolescent" => AgeGroup::Adolescent,
            "adult" => AgeGroup::Adult,
            other => {
                return Err(Error::InvalidProfile(format!(
                    "unknown age group {other:?}"
                )))
            }
        };
        let index: u8 = rest
            .trim_start_matches('#')
            .parse()
            .map_err(|_| Error::InvalidProfile(format!("{s:?}: bad index")))?;
        ProfileId::new(group, index)
    }
}

impl Serialize for ProfileId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProfileId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Physiology of one virtual person. Rates are per minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientParams {
    pub profile_id: ProfileId,
    /// kg
    pub body_mass: f64,
    /// insulin-units per 5-minute step
    pub basal_rate: f64,
    /// remote insulin effect (1/min) per insulin-unit in plasma
    pub insulin_sensitivity: f64,
    pub carb_absorption_rate: f64,
    pub insulin_action_rate: f64,
    pub insulin_clearance_rate: f64,
    pub glucose_self_regulation: f64,
    /// mg/dl/min
    pub endogenous_production: f64,
    /// mg/dl
    pub equilibrium_bg: f64,
}

impl PatientParams {
    /// Plasma insulin held by basal infusion alone.
    pub fn basal_plasma_insulin(&self) -> f64 {
        self.basal_rate / STEP_MINUTES / self.insulin_clearance_rate
    }

    /// Remote insulin effect held by basal infusion alone.
    pub fn basal_insulin_effect(&self) -> f64 {
        self.insulin_sensitivity * self.basal_plasma_insulin()
    }

    /// mg/dl of glucose appearing per gram of carbohydrate.
    pub fn glucose_per_gram(&self) -> f64 {
        1000.0 * CARB_BIOAVAILABILITY / (GLUCOSE_VOLUME_DL_PER_KG * self.body_mass)
    }

    /// Endogenous production that balances basal insulin at `equilibrium_bg`.
    pub fn balanced_production(&self) -> f64 {
        (self.glucose_self_regulation + self.basal_insulin_effect()) * self.equilibrium_bg
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("body_mass", self.body_mass),
            ("basal_rate", self.basal_rate),
            ("insulin_sensitivity", self.insulin_sensitivity),
            ("carb_absorption_rate", self.carb_absorption_rate),
            ("insulin_action_rate", self.insulin_action_rate),
            ("insulin_clearance_rate", self.insulin_clearance_rate),
            ("glucose_self_regulation", self.glucose_self_regulation),
            ("endogenous_production", self.endogenous_production),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "{}: {name} must be positive, got {v}",
                    self.profile_id
                )));
            }
        }
        if !(90.0..=140.0).contains(&self.equilibrium_bg) {
            return Err(Error::InvalidProfile(format!(
                "{}: equilibrium_bg {} outside [90, 140]",
                self.profile_id, self.equilibrium_bg
            )));
        }
        let balanced = self.balanced_production();
        if (self.endogenous_production - balanced).abs() > 1e-9 * balanced {
            return Err(Error::InvalidProfile(format!(
                "{}: endogenous_production {} does not balance basal insulin (expected {balanced})",
                self.profile_id, self.endogenous_production
            )));
        }
        Ok(())
    }
}

/// Group templates; index 1 of each group uses them unchanged.
struct Template {
    body_mass: f64,
    basal_rate: f64,
    insulin_sensitivity: f64,
    carb_absorption_rate: f64,
    insulin_action_rate: f64,
    insulin_clearance_rate: f64,
    glucose_self_regulation: f64,
}

fn template(group: AgeGroup) -> Template {
    match group {
        AgeGroup::Child => Template {
            body_mass: 32.0,
            basal_rate: 0.05,
            insulin_sensitivity: 0.025,
            carb_absorption_rate: 0.045,
            insulin_action_rate: 0.0144,
            insulin_clearance_rate: 0.024,
            glucose_self_regulation: 0.0040,
        },
        AgeGroup::Adolescent => Template {
            body_mass: 55.0,
            basal_rate: 0.08,
            insulin_sensitivity: 0.016,
            carb_absorption_rate: 0.040,
            insulin_action_rate: 0.013,
            insulin_clearance_rate: 0.0224,
            glucose_self_regulation: 0.0035,
        },
        AgeGroup::Adult => Template {
            body_mass: 75.0,
            basal_rate: 0.10,
            insulin_sensitivity: 0.0125,
            carb_absorption_rate: 0.035,
            insulin_action_rate: 0.012,
            insulin_clearance_rate: 0.020,
            glucose_self_regulation: 0.0030,
        },
    }
}

/// Per-index multipliers, all within ±15%, in template field order.
const INDEX_SCALE: [[f64; 7]; 3] = [
    [1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00],
    [1.12, 0.90, 1.10, 0.88, 1.06, 0.93, 1.14],
    [0.87, 1.13, 0.88, 1.11, 0.91, 1.08, 0.86],
];

pub const DEFAULT_EQUILIBRIUM_BG: f64 = 120.0;

/// Parameters of one of the nine shipped virtual people.
pub fn make_profile(group: AgeGroup, index: u8) -> Result<PatientParams> {
    let id = ProfileId::new(group, index)?;
    let t = template(group);
    let k = INDEX_SCALE[usize::from(index - 1)];
    let mut p = PatientParams {
        profile_id: id,
        body_mass: t.body_mass * k[0],
        basal_rate: t.basal_rate * k[1],
        insulin_sensitivity: t.insulin_sensitivity * k[2],
        carb_absorption_rate: t.carb_absorption_rate * k[3],
        insulin_action_rate: t.insulin_action_rate * k[4],
        insulin_clearance_rate: t.insulin_clearance_rate * k[5],
        glucose_self_regulation: t.glucose_self_regulation * k[6],
        endogenous_production: 0.0,
        equilibrium_bg: DEFAULT_EQUILIBRIUM_BG,
    };
    p.endogenous_production = p.balanced_production();
    Ok(p)
}

pub fn profile(id: ProfileId) -> PatientParams {
    make_profile(id.group, id.index).expect("ProfileId is always valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    /// mg/dl
    pub plasma_glucose: f64,
    /// 1/min
    pub remote_insulin_effect: f64,
    /// insulin-units
    pub plasma_insulin: f64,
    /// grams
    pub gut_carbs_1: f64,
    pub gut_carbs_2: f64,
}

impl PatientState {
    fn to_array(self) -> [f64; 5] {
        [
            self.gut_carbs_1,
            self.gut_carbs_2,
            self.plasma_insulin,
            self.remote_insulin_effect,
            self.plasma_glucose,
        ]
    }

    fn from_array(v: [f64; 5]) -> Self {
        PatientState {
            gut_carbs_1: v[0],
            gut_carbs_2: v[1],
            plasma_insulin: v[2],
            remote_insulin_effect: v[3],
            plasma_glucose: v[4],
        }
    }
}

/// Fixed point under basal insulin and no carbs.
pub fn steady_state(params: &PatientParams) -> PatientState {
    PatientState {
        plasma_glucose: params.equilibrium_bg,
        remote_insulin_effect: params.basal_insulin_effect(),
        plasma_insulin: params.basal_plasma_insulin(),
        gut_carbs_1: 0.0,
        gut_carbs_2: 0.0,
    }
}

fn derivative(p: &PatientParams, infusion: f64, s: &[f64; 5]) -> [f64; 5] {
    let [q1, q2, i, x, g] = *s;
    let ka = p.carb_absorption_rate;
    let ra = p.glucose_per_gram() * ka * q2;
    [
        -ka * q1,
        ka * q1 - ka * q2,
        infusion - p.insulin_clearance_rate * i,
        p.insulin_action_rate * (p.insulin_sensitivity * i - x),
        p.endogenous_production - (p.glucose_self_regulation + x) * g + ra,
    ]
}

fn axpy(a: f64, x: &[f64; 5], y: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|k| y[k] + a * x[k])
}

/// Advances the patient by one environment step.
///
/// `insulin` (units) is infused uniformly across the step and `carbs`
/// (grams) enter the first gut compartment at step start. Returns the new
/// state and its plasma glucose.
pub fn step_patient(
    state: &PatientState,
    params: &PatientParams,
    insulin: f64,
    carbs: f64,
    dt: f64,
) -> Result<(PatientState, f64)> {
    if !(insulin >= 0.0 && insulin.is_finite()) || !(carbs >= 0.0 && carbs.is_finite()) {
        return Err(Error::Simulation(format!(
            "inputs must be finite and non-negative (insulin {insulin}, carbs {carbs})"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Simulation(format!(
            "step length must be positive, got {dt}"
        )));
    }
    let substeps = (dt / SUBSTEP_MINUTES).round().max(1.0) as usize;
    let h = dt / substeps as f64;
    let infusion = insulin / dt;

    let mut s = state.to_array();
    s[0] += carbs;
    for _ in 0..substeps {
        let k1 = derivative(params, infusion, &s);
        let k2 = derivative(params, infusion, &axpy(0.5 * h, &k1, &s));
        let k3 = derivative(params, infusion, &axpy(0.5 * h, &k2, &s));
        let k4 = derivative(params, infusion, &axpy(h, &k3, &s));
        for k in 0..5 {
            s[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        // the gut chain is linear decay; RK4 can undershoot zero by rounding
        s[0] = s[0].max(0.0);
        s[1] = s[1].max(0.0);
        s[4] = s[4].clamp(BG_FLOOR, BG_CEIL);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation(format!(
            "non-finite patient state after step: {s:?} (from {state:?}, insulin {insulin}, carbs {carbs})"
        )));
    }
    let next = PatientState::from_array(s);
    Ok((next, next.plasma_glucose))
}

/// CGM sensor noise settings. Noise is zero unless configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgmConfig {
    pub noise_std: f64,
    pub noise_correlation: f64,
    pub seed: u64,
}

impl Default for CgmConfig {
    fn default() -> Self {
        CgmConfig {
            noise_std: 0.0,
            noise_correlation: 0.0,
            seed: 0,
        }
    }
}

impl CgmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "cgm.noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if !(0.0..1.0).contains(&self.noise_correlation) {
            return Err(Error::Config(format!(
                "cgm.noise_correlation must be in [0, 1), got {}",
                self.noise_correlation
            )));
        }
        Ok(())
    }
}

/// A CGM with stationary AR(1) Gaussian error of standard deviation
/// `noise_std`.
#[derive(Debug, Clone)]
pub struct CgmSensor {
    config: CgmConfig,
    rng: ChaCha8Rng,
    error: Option<f64>,
}

impl CgmSensor {
    pub fn new(config: CgmConfig) -> Self {
        CgmSensor {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            error: None,
        }
    }

    pub fn with_rng(config: CgmConfig, rng: ChaCha8Rng) -> Self {
        CgmSensor {
            config,
            rng,
            error: None,
        }
    }

    pub fn read(&mut self, true_bg: f64) -> f64 {
        read_cgm(true_bg, &self.config, &mut self.rng, &mut self.error)
    }
}

/// One CGM reading. `error` carries the previous sensor error between calls
/// (`None` before the first reading).
pub fn read_cgm<R: Rng + ?Sized>(
    true_bg: f64,
    cgm: &CgmConfig,
    rng: &mut R,
    error: &mut Option<f64>,
) -> f64 {
    if cgm.noise_std == 0.0 {
        return true_bg;
    }
    let z: f64 = rng.sample(StandardNormal);
    let e = match *error {
        None => cgm.noise_std * z,
        Some(prev) => {
            let phi = cgm.noise_correlation;
            phi * prev + (1.0 - phi * phi).sqrt() * cgm.noise_std * z
        }
    };
    *error = Some(e);
    (true_bg + e).clamp(BG_FLOOR, BG_CEIL)
}
