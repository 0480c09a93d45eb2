//! Daily meal and snack schedules.
//!
//! Each event is taken independently with its probability. Its clock time is
//! a normal truncated to the row's bounds (by rejection) and its size a
//! normal clamped below at 1 g. The episode clock starts at 06:00, so hour
//! `h` maps to step `round((h - 6) * 12)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hour of day at which an episode starts.
pub const EPISODE_START_HOUR: f64 = 6.0;
pub const STEPS_PER_HOUR: f64 = 12.0;
pub const STEPS_PER_DAY: usize = 288;
pub const MIN_CARBS: f64 = 1.0;

/// One row of the meal generator table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MealSpec {
    pub name: String,
    pub probability: f64,
    pub time_lower: f64,
    pub time_upper: f64,
    pub time_mean: f64,
    pub time_std: f64,
    pub carb_mean: f64,
    pub carb_std: f64,
}

impl MealSpec {
    #[allow(clippy::too_many_arguments)]
    fn row(
        name: &str,
        probability: f64,
        time_lower: f64,
        time_upper: f64,
        time_mean: f64,
        time_std: f64,
        carb_mean: f64,
        carb_std: f64,
    ) -> Self {
        MealSpec {
            name: name.to_string(),
            probability,
            time_lower,
            time_upper,
            time_mean,
            time_std,
            carb_mean,
            carb_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("meal {:?}: {msg}", self.name)));
        if !(0.0..=1.0).contains(&self.probability) {
            return bad(format!("probability {} outside [0, 1]", self.probability));
        }
        if !(self.time_lower < self.time_upper) {
            return bad(format!(
                "time_lower {} >= time_upper {}",
                self.time_lower, self.time_upper
            ));
        }
        if self.time_upper <= EPISODE_START_HOUR || self.time_lower >= EPISODE_START_HOUR + 24.0 {
            return bad("time window does not overlap the episode".into());
        }
        if !(self.time_std > 0.0) || !(self.carb_std >= 0.0) {
            return bad("standard deviations must be positive".into());
        }
        if !(self.carb_mean > 0.0) {
            return bad(format!("carb_mean {} must be positive", self.carb_mean));
        }
        Ok(())
    }
}

/// The six-row generator table: three meals and three snacks.
pub fn default_specs() -> Vec<MealSpec> {
    vec![
        MealSpec::row("breakfast", 0.95, 5.0, 9.0, 7.0, 1.0, 45.0, 10.0),
        MealSpec::row("snack1", 0.3, 9.0, 10.0, 9.5, 0.5, 10.0, 5.0),
        MealSpec::row("lunch", 0.95, 10.0, 14.0, 12.0, 1.0, 70.0, 10.0),
        MealSpec::row("snack2", 0.3, 14.0, 16.0, 15.0, 0.5, 10.0, 5.0),
        MealSpec::row("dinner", 0.95, 16.0, 20.0, 18.0, 1.0, 80.0, 10.0),
        MealSpec::row("snack3", 0.3, 20.0, 23.0, 21.5, 0.5, 10.0, 5.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealEvent {
    /// 5-minute step from 06:00
    pub time_step: usize,
    /// grams
    pub carbs: f64,
}

/// Normal(mean, std) truncated to `[lower, upper]` by rejection.
///
/// Falls back to the clamped mean if the bounds carry almost no mass, which
/// cannot happen for the shipped table.
pub fn sample_truncnorm<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(lower < upper && std > 0.0);
    let normal = Normal::new(mean, std).expect("std > 0");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if (lower..=upper).contains(&v) {
            return v;
        }
    }
    mean.clamp(lower, upper)
}

/// Step index for a clock hour.
pub fn hour_to_step(hour: f64) -> usize {
    ((hour - EPISODE_START_HOUR) * STEPS_PER_HOUR)
        .round()
        .max(0.0) as usize
}

/// One included row of the table, before steps are merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledMeal {
    /// row of the meal table
    pub spec: usize,
    pub hour: f64,
    pub carbs: f64,
}

/// Draws every row of the table and keeps the included ones, in table order.
pub fn sample_meals<R: Rng + ?Sized>(specs: &[MealSpec], rng: &mut R) -> Vec<SampledMeal> {
    let mut meals = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        // draw every variate regardless of inclusion so the stream position
        // does not depend on earlier outcomes
        let take = rng.gen_bool(spec.probability.clamp(0.0, 1.0));
        let hour = sample_truncnorm(
            spec.time_mean,
            spec.time_std,
            spec.time_lower,
            spec.time_upper,
            rng,
        );
        let carbs = if spec.carb_std > 0.0 {
            Normal::new(spec.carb_mean, spec.carb_std)
                .expect("std > 0")
                .sample(rng)
        } else {
            spec.carb_mean
        };
        if take {
            meals.push(SampledMeal {
                spec: i,
                hour,
                carbs: carbs.max(MIN_CARBS),
            });
        }
    }
    meals
}

/// Samples one day's events, sorted by step with same-step events merged.
pub fn sample_day<R: Rng + ?Sized>(specs: &[MealSpec], rng: &mut R) -> Vec<MealEvent> {
    let mut events: Vec<MealEvent> = sample_meals(specs, rng)
        .into_iter()
        .map(|m| MealEvent {
            time_step: hour_to_step(m.hour).min(STEPS_PER_DAY - 1),
            carbs: m.carbs,
        })
        .collect();
    events.sort_by_key(|e| e.time_step);
    events.dedup_by(|later, earlier| {
        if later.time_step == earlier.time_step {
            earlier.carbs += later.carbs;
            true
        } else {
            false
        }
    });
    events
}

/// Expands events into a per-step carbs vector of length `steps`.
pub fn carbs_per_step(events: &[MealEvent], steps: usize) -> Vec<f64> {
    let mut v = vec![0.0; steps];
    for e in events {
        if e.time_step < steps {
            v[e.time_step] += e.carbs;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_values() {
        let s = default_specs();
        assert_eq!(s.len(), 6);
        assert_eq!(
            (
                s[0].probability,
                s[0].time_mean,
                s[0].carb_mean,
                s[0].carb_std
            ),
            (0.95, 7.0, 45.0, 10.0)
        );
        assert_eq!(
            (
                s[3].time_lower,
                s[3].time_upper,
                s[3].time_mean,
                s[3].time_std
            ),
            (14.0, 16.0, 15.0, 0.5)
        );
        assert_eq!(s[4].carb_mean, 80.0);
        for spec in &s {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn truncnorm_respects_bounds_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_truncnorm(7.0, 1.0, 5.0, 9.0, &mut rng))
            .collect();
        assert!(xs.iter().all(|x| (5.0..=9.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 7.0).abs() < 0.05, "mean {mean}");
        let tight = sample_truncnorm(7.0, 1e-9, 5.0, 9.0, &mut rng);
        assert!((tight - 7.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_day_at_means() {
        let specs: Vec<MealSpec> = default_specs()
            .into_iter()
            .map(|s| MealSpec {
                probability: 1.0,
                time_std: 1e-9,
                carb_std: 0.0,
                ..s
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let day = sample_day(&specs, &mut rng);
        let steps: Vec<usize> = day.iter().map(|e| e.time_step).collect();
        let carbs: Vec<f64> = day.iter().map(|e| e.carbs).collect();
        assert_eq!(steps, vec![12, 42, 72, 108, 144, 186]);
        assert_eq!(carbs, vec![45.0, 10.0, 70.0, 10.0, 80.0, 10.0]);
    }

    #[test]
    fn zero_probability_gives_empty_day() {
        let specs: Vec<MealSpec> = default_specs()
            .into_iter()
            .map(|s| MealSpec {
                probability: 0.0,
                ..s
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_day(&specs, &mut rng).is_empty());
    }

    #[test]
    fn same_step_events_merge() {
        let specs = vec![
            MealSpec::row("a", 1.0, 7.0, 8.0, 7.5, 1e-9, 20.0, 0.0),
            MealSpec::row("b", 1.0, 7.0, 8.0, 7.5, 1e-9, 15.0, 0.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let day = sample_day(&specs, &mut rng);
        assert_eq!(
            day,
            vec![MealEvent {
                time_step: 18,
                carbs: 35.0
            }]
        );
    }

    #[test]
    fn days_are_sorted_unique_and_seeded() {
        let specs = default_specs();
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let day = sample_day(&specs, &mut a);
            assert_eq!(day, sample_day(&specs, &mut b));
            assert!(day.windows(2).all(|w| w[0].time_step < w[1].time_step));
            assert!(day.iter().all(|e| e.carbs >= MIN_CARBS));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = default_specs()[0].clone();
        s.time_upper = s.time_lower;
        assert!(s.validate().is_err());
        let mut s = default_specs()[0].clone();
        s.probability = 1.5;
        assert!(s.validate().is_err());
    }
}
