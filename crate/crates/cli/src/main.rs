use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gluco_core::harness::{
    compare_uncertainty_modes, curves_csv, read_metrics, render_tables, run_experiment_with, sweep,
};
use gluco_core::profiles::builtin;
use gluco_core::{AgentKind, Error, ExperimentConfig, MetricsReport, ProfileId};

#[derive(Parser)]
#[command(
    name = "gluco",
    version,
    about = "Closed-loop glucose control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// overrides `output_dir` from the config
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Run every profile × agent cell of a base config.
    Sweep {
        config: PathBuf,
        /// comma-separated profile ids; all nine when omitted
        #[arg(long, value_delimiter = ',')]
        profiles: Vec<ProfileId>,
        /// comma-separated agents; all three when omitted
        #[arg(long, value_delimiter = ',')]
        agents: Vec<AgentKind>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print completion and time-in-range tables from metrics files.
    Report {
        /// `metrics.json` files or directories searched recursively
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print learning curves as long-format CSV.
    Curves {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both planner cost modes over several seeds and summarize.
    Compare {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// write the paired curves as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in profile parameter file.
    Profiles {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn execute(command: Command) -> gluco_core::Result<()> {
    match command {
        Command::Run {
            config,
            output,
            quiet,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output.is_some() {
                cfg.output_dir = output;
            }
            let run = run_experiment_with(&cfg, |log| {
                if !quiet {
                    eprintln!(
                        "episode {:>4}  {:<16} {:>3} steps",
                        log.episode,
                        log.termination.as_str(),
                        log.duration_steps
                    );
                }
            })?;
            println!("{}", render_tables(std::slice::from_ref(&run.report)));
            Ok(())
        }
        Command::Sweep {
            config,
            profiles,
            agents,
            output,
        } => {
            let mut base = ExperimentConfig::load(&config)?;
            if output.is_some() {
                base.output_dir = output;
            }
            let profiles = if profiles.is_empty() {
                ProfileId::all().collect()
            } else {
                profiles
            };
            let agents = if agents.is_empty() {
                AgentKind::ALL.to_vec()
            } else {
                agents
            };
            let reports = sweep(&base, &profiles, &agents)?;
            println!("{}", render_tables(&reports));
            Ok(())
        }
        Command::Report { inputs } => {
            let reports = load_reports(&inputs)?;
            println!("{}", render_tables(&reports));
            Ok(())
        }
        Command::Curves { inputs, out } => {
            let reports = load_reports(&inputs)?;
            emit(&curves_csv(&reports), out.as_deref())
        }
        Command::Compare { config, seeds, out } => {
            let base = ExperimentConfig::load(&config)?;
            let cmp = compare_uncertainty_modes(&base, &seeds)?;
            println!("profile {}  seeds {:?}", cmp.profile, seeds);
            for (label, with) in [("with uncertainty", true), ("without uncertainty", false)] {
                println!(
                    "{label:<20} median first full episode {:>6.1}  mean final TIR {:>5.1}%",
                    cmp.median_first_full(with),
                    cmp.mean_final_tir(with)
                );
            }
            if let Some(path) = out {
                let text =
                    serde_json::to_string_pretty(&cmp).map_err(|e| Error::Format(e.to_string()))?;
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Profiles { out } => emit(&builtin().to_toml(), out.as_deref()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> gluco_core::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn load_reports(inputs: &[PathBuf]) -> gluco_core::Result<Vec<MetricsReport>> {
    let mut files = Vec::new();
    for input in inputs {
        collect_metrics(input, &mut files)?;
    }
    if files.is_empty() {
        return Err(Error::InvalidInput("no metrics.json files found".into()));
    }
    files.sort();
    files.iter().map(|p| read_metrics(p)).collect()
}

fn collect_metrics(path: &Path, out: &mut Vec<PathBuf>) -> gluco_core::Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_dir() {
            collect_metrics(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.json") {
            out.push(p);
        }
    }
    Ok(())
}
