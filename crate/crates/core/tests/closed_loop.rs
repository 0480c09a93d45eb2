use gluco_core::harness::{
    compare_uncertainty_modes, read_metrics, run_experiment, sweep, CSV_HEADER,
};
use gluco_core::{AgentKind, EsnHyper, ExperimentConfig, ProfileId, Termination};

fn small_mbrl(agent: AgentKind, episodes: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("adult#002".parse().unwrap(), agent, episodes, seed);
    cfg.esn = EsnHyper {
        reservoir_size: 40,
        washout: 6,
        ..EsnHyper::default()
    };
    cfg.ensemble_size = 3;
    cfg.warmup_episodes = 2;
    cfg.horizon = 24;
    cfg
}

#[test]
fn sweep_yields_one_report_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = ExperimentConfig::new("adult#001".parse().unwrap(), AgentKind::Bb, 2, 5);
    base.output_dir = Some(dir.path().to_path_buf());
    let profiles: Vec<ProfileId> = ["child#001", "adolescent#002", "adult#003"]
        .iter()
        .map(|p| p.parse().unwrap())
        .collect();
    let agents = [AgentKind::Bb, AgentKind::MbrlWithUncertainty];
    let reports = sweep(&base, &profiles, &agents).unwrap();
    assert_eq!(reports.len(), 6);
    for r in &reports {
        let cell = dir.path().join(format!(
            "{}_{}",
            r.profile.to_string().replace('#', ""),
            r.agent
        ));
        assert_eq!(&read_metrics(&cell.join("metrics.json")).unwrap(), r);
        assert!(cell.join("episodes/episode_0001.csv").is_file());
        assert!(cell.join("config.toml").is_file());
    }
}

#[test]
fn episode_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_mbrl(AgentKind::MbrlWithUncertainty, 3, 1);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let run = run_experiment(&cfg).unwrap();

    let mut reader = csv::Reader::from_path(dir.path().join("episodes/episode_0002.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), run.logs[2].duration_steps);
    let (last, body) = rows.split_last().unwrap();
    assert!(body.iter().all(|r| r[9].is_empty()));
    assert_eq!(&last[9], run.logs[2].termination.as_str());
    assert!(
        rows.iter().all(|r| !r[8].is_empty()),
        "planner episodes log a multiplier every step"
    );
    assert_eq!(&rows[0][1], "365");

    let mut warm = csv::Reader::from_path(dir.path().join("episodes/episode_0000.csv")).unwrap();
    assert!(warm.records().all(|r| r.unwrap()[8].is_empty()));

    let saved = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn paired_curves_are_aligned_and_repeatable() {
    let base = small_mbrl(AgentKind::MbrlWithUncertainty, 4, 0);
    let a = compare_uncertainty_modes(&base, &[3, 4]).unwrap();
    assert_eq!(a.with_uncertainty.len(), 2);
    assert_eq!(a.without_uncertainty.len(), 2);
    for (w, wo) in a.with_uncertainty.iter().zip(&a.without_uncertainty) {
        assert_eq!(w.seed, wo.seed);
        assert_eq!(w.durations.len(), 4);
        assert_eq!(w.durations.len(), wo.durations.len());
        // warm-up episodes do not depend on the planner mode
        assert_eq!(w.durations[..2], wo.durations[..2]);
        assert_eq!(w.tir[..2], wo.tir[..2]);
    }
    let b = compare_uncertainty_modes(&base, &[3, 4]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn episodes_stay_in_bounds_on_every_profile() {
    for id in ProfileId::all() {
        let run = run_experiment(&ExperimentConfig::new(id, AgentKind::Bb, 3, 11)).unwrap();
        for log in &run.logs {
            assert!(log.duration_steps <= 288);
            let last = log.steps.last().unwrap().true_bg;
            match log.termination {
                Termination::Completed => assert_eq!(log.duration_steps, 288),
                Termination::HypoTerminated => assert!(last < 20.0),
                Termination::HyperTerminated => assert!(last > 600.0),
                Termination::Aborted => panic!("{id}: {:?}", log.diagnostic),
            }
        }
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 2);
}
