use serde::{Deserialize, Serialize};

use super::{AgentKind, EpisodeLog};
use crate::simcore::ProfileId;

/// Episodes at the end of a run used for the completion rate.
pub const EVALUATION_WINDOW: usize = 30;
/// Completed episodes used for time in range.
pub const TIR_EPISODES: usize = 10;
pub const TIR_LOW: f64 = 70.0;
pub const TIR_HIGH: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub profile: ProfileId,
    pub agent: AgentKind,
    pub seed: u64,
    pub episodes: usize,
    pub warmup_episodes: usize,
    /// first episode of the evaluation window
    pub evaluation_start: usize,
    pub completion_rate_pct: f64,
    /// absent when the window holds no completed episode
    pub time_in_range_pct: Option<f64>,
    /// learning curves, one entry per episode
    pub durations: Vec<usize>,
    pub tir_per_episode: Vec<f64>,
    /// first completed episode after warm-up, if any
    pub first_full_episode: Option<usize>,
}

/// Percent of CGM readings in `[70, 180]` mg/dl.
pub fn episode_tir(log: &EpisodeLog) -> f64 {
    tir_of(log.cgm_trace())
}

fn tir_of(values: impl Iterator<Item = f64>) -> f64 {
    let (mut inside, mut total) = (0usize, 0usize);
    for v in values {
        total += 1;
        if (TIR_LOW..=TIR_HIGH).contains(&v) {
            inside += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * inside as f64 / total as f64
    }
}

/// Percent of episodes that ran the full day.
pub fn completion_rate(logs: &[EpisodeLog]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    100.0 * logs.iter().filter(|l| l.completed()).count() as f64 / logs.len() as f64
}

/// Time in range pooled over the last ten completed episodes of `logs`.
pub fn time_in_range(logs: &[EpisodeLog]) -> Option<f64> {
    let completed: Vec<&EpisodeLog> = logs.iter().filter(|l| l.completed()).collect();
    if completed.is_empty() {
        return None;
    }
    let last = &completed[completed.len().saturating_sub(TIR_EPISODES)..];
    Some(tir_of(last.iter().flat_map(|l| l.cgm_trace())))
}

/// Index of the first completed episode at or after `from`.
pub fn first_full_episode(logs: &[EpisodeLog], from: usize) -> Option<usize> {
    logs.iter()
        .filter(|l| l.episode >= from)
        .find(|l| l.completed())
        .map(|l| l.episode)
}

/// Median over runs; a run that never completes counts as `never`.
pub fn median_first_full(values: &[Option<usize>], never: usize) -> f64 {
    let mut v: Vec<usize> = values.iter().map(|x| x.unwrap_or(never)).collect();
    if v.is_empty() {
        return never as f64;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Completion over the last [`EVALUATION_WINDOW`] episodes and time in range
/// over the last ten completed episodes inside that window.
pub fn summarize(
    profile: ProfileId,
    agent: AgentKind,
    seed: u64,
    warmup_episodes: usize,
    logs: &[EpisodeLog],
) -> MetricsReport {
    let start = logs.len().saturating_sub(EVALUATION_WINDOW);
    let window = &logs[start..];
    let warmup = if agent == AgentKind::Bb {
        0
    } else {
        warmup_episodes
    };
    MetricsReport {
        profile,
        agent,
        seed,
        episodes: logs.len(),
        warmup_episodes: warmup,
        evaluation_start: start,
        completion_rate_pct: completion_rate(window),
        time_in_range_pct: time_in_range(window),
        durations: logs.iter().map(|l| l.duration_steps).collect(),
        tir_per_episode: logs.iter().map(episode_tir).collect(),
        first_full_episode: first_full_episode(logs, warmup),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{StepRecord, Termination};
    use super::*;

    pub(crate) fn synthetic(
        episode: usize,
        bg: f64,
        steps: usize,
        termination: Termination,
    ) -> EpisodeLog {
        EpisodeLog {
            episode,
            agent: "test".into(),
            meals: vec![],
            steps: (0..steps)
                .map(|k| StepRecord {
                    step: k,
                    minute_of_day: 0,
                    true_bg: bg,
                    cgm: bg,
                    carbs_g: 0.0,
                    bolus_u: 0.0,
                    basal_u: 0.1,
                    cost: 0.0,
                    plan: None,
                })
                .collect(),
            termination,
            duration_steps: steps,
            diagnostic: None,
        }
    }

    #[test]
    fn completion_ratio() {
        let logs: Vec<_> = (0..30)
            .map(|i| {
                let t = if i < 27 {
                    Termination::Completed
                } else {
                    Termination::HypoTerminated
                };
                synthetic(i, 120.0, if i < 27 { 288 } else { 100 }, t)
            })
            .collect();
        assert!((completion_rate(&logs) - 90.0).abs() < 1e-12);
        assert_eq!(completion_rate(&logs[..27]), 100.0);
    }

    #[test]
    fn tir_by_level() {
        assert_eq!(
            time_in_range(&[synthetic(0, 100.0, 288, Termination::Completed)]),
            Some(100.0)
        );
        assert_eq!(
            time_in_range(&[synthetic(0, 250.0, 288, Termination::Completed)]),
            Some(0.0)
        );
        assert_eq!(
            time_in_range(&[synthetic(0, 100.0, 50, Termination::HyperTerminated)]),
            None
        );
    }

    #[test]
    fn tir_uses_last_ten_completed() {
        let mut logs: Vec<_> = (0..10)
            .map(|i| synthetic(i, 250.0, 288, Termination::Completed))
            .collect();
        logs.extend((10..20).map(|i| synthetic(i, 100.0, 288, Termination::Completed)));
        logs.push(synthetic(20, 250.0, 10, Termination::HyperTerminated));
        assert_eq!(time_in_range(&logs), Some(100.0));
    }

    #[test]
    fn summary_windows() {
        let logs: Vec<_> = (0..40)
            .map(|i| {
                if i < 12 {
                    synthetic(i, 300.0, 20, Termination::HyperTerminated)
                } else {
                    synthetic(i, 150.0, 288, Termination::Completed)
                }
            })
            .collect();
        let r = summarize(
            "adult#001".parse().unwrap(),
            AgentKind::MbrlWithUncertainty,
            1,
            5,
            &logs,
        );
        assert_eq!(r.evaluation_start, 10);
        assert!((r.completion_rate_pct - 28.0 / 30.0 * 100.0).abs() < 1e-9);
        assert_eq!(r.first_full_episode, Some(12));
        assert_eq!(r.durations.len(), 40);
    }

    #[test]
    fn median_with_failures() {
        assert_eq!(median_first_full(&[Some(3), None, Some(1)], 200), 3.0);
        assert_eq!(median_first_full(&[Some(3), Some(5)], 200), 4.0);
        assert_eq!(median_first_full(&[None, None], 200), 200.0);
    }
}
