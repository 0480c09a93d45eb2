use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::config::AgentKind;
use super::metrics::MetricsReport;
use super::EpisodeLog;
use crate::error::{Error, Result};
use crate::simcore::ProfileId;

/// Column order of the per-step episode CSV.
pub const CSV_HEADER: [&str; 10] = [
    "step",
    "minute_of_day",
    "true_bg",
    "cgm",
    "carbs_g",
    "bolus_u",
    "basal_u",
    "cost",
    "chosen_multiplier",
    "termination",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// One row per step. `chosen_multiplier` is empty for non-planning steps and
/// `termination` is set on the final row only.
pub fn write_episode_csv(log: &EpisodeLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    let last = log.steps.len().saturating_sub(1);
    for (i, s) in log.steps.iter().enumerate() {
        let multiplier = s
            .plan
            .as_ref()
            .map(|p| p.chosen_multiplier.to_string())
            .unwrap_or_default();
        let termination = if i == last {
            log.termination.as_str()
        } else {
            ""
        };
        w.write_record([
            s.step.to_string(),
            s.minute_of_day.to_string(),
            s.true_bg.to_string(),
            s.cgm.to_string(),
            s.carbs_g.to_string(),
            s.bolus_u.to_string(),
            s.basal_u.to_string(),
            s.cost.to_string(),
            multiplier,
            termination.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(report: &MetricsReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Completion-rate and time-in-range tables, one row per profile and one
/// column per agent. Reports sharing a profile and agent (several seeds)
/// are averaged; a cell without completed episodes shows `n/a`.
pub fn render_tables(reports: &[MetricsReport]) -> String {
    let agents: BTreeSet<AgentKind> = reports.iter().map(|r| r.agent).collect();
    let mut cells: BTreeMap<(ProfileId, AgentKind), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        cells.entry((r.profile, r.agent)).or_default().push(r);
    }
    let profiles: BTreeSet<ProfileId> = reports.iter().map(|r| r.profile).collect();

    let table = |title: &str, value: &dyn Fn(&[&MetricsReport]) -> Option<f64>| {
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let mut header = format!("{:<22}", "Virtual Person Profile");
        for a in &agents {
            let _ = write!(header, " | {:>22}", a.label());
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.len()));
        for p in &profiles {
            let mut line = format!("{:<22}", p.to_string());
            for a in &agents {
                let text = match cells.get(&(*p, *a)).and_then(|rs| value(rs)) {
                    Some(v) => format!("{v:.1}"),
                    None => "n/a".to_string(),
                };
                let _ = write!(line, " | {text:>22}");
            }
            let _ = writeln!(out, "{line}");
        }
        out
    };

    let completion = table("% of completed episodes without termination", &|rs| {
        Some(mean(
            &rs.iter().map(|r| r.completion_rate_pct).collect::<Vec<_>>(),
        ))
    });
    let tir = table("% of time in target range (70-180 mg/dl)", &|rs| {
        let v: Vec<f64> = rs.iter().filter_map(|r| r.time_in_range_pct).collect();
        (!v.is_empty()).then(|| mean(&v))
    });
    format!("{completion}\n{tir}")
}

/// Long-format learning curves:
/// `profile,agent,seed,episode,duration_steps,tir_pct`.
pub fn curves_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("profile,agent,seed,episode,duration_steps,tir_pct\n");
    for r in reports {
        for (ep, (d, t)) in r.durations.iter().zip(&r.tir_per_episode).enumerate() {
            let _ = writeln!(out, "{},{},{},{ep},{d},{t}", r.profile, r.agent, r.seed);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(profile: &str, agent: AgentKind, completion: f64, tir: Option<f64>) -> MetricsReport {
        MetricsReport {
            profile: profile.parse().unwrap(),
            agent,
            seed: 0,
            episodes: 2,
            warmup_episodes: 0,
            evaluation_start: 0,
            completion_rate_pct: completion,
            time_in_range_pct: tir,
            durations: vec![288, 100],
            tir_per_episode: vec![80.0, 10.0],
            first_full_episode: Some(0),
        }
    }

    #[test]
    fn tables_have_agent_columns() {
        let text = render_tables(&[
            report("adult#001", AgentKind::Bb, 100.0, Some(70.0)),
            report(
                "adult#001",
                AgentKind::MbrlWithUncertainty,
                96.7,
                Some(72.5),
            ),
            report("child#002", AgentKind::Bb, 90.0, Some(50.0)),
            report("child#002", AgentKind::MbrlWithUncertainty, 0.0, None),
        ]);
        let header = text.lines().nth(1).unwrap();
        assert!(header.contains("BBController") && header.contains("MBRL"));
        let bb = header.find("BBController").unwrap();
        assert!(bb < header.find("| ").map(|i| i + 40).unwrap());
        assert!(text.contains("96.7"));
        assert!(text.contains("n/a"));
        assert!(text.find("child#002").unwrap() < text.find("adult#001").unwrap());
    }

    #[test]
    fn curves_are_long_format() {
        let csv = curves_csv(&[report("adult#001", AgentKind::Bb, 100.0, None)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "adult#001,bb,0,0,288,80");
    }
}
