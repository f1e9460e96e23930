//! `fluidnet` experiment runner.
//!
//! ```text
//! fluidnet run     --controller marl --seed 1 --out results/ [--config scenario.toml] [--trace]
//!                  [--save-policy q.csv] [--load-policy q.csv]
//! fluidnet compare --seeds 1,2,3 --out results/ [--config scenario.toml]
//! fluidnet sweep   --densities 5,10,20 --seeds 1,2,3 --out results/ [--config scenario.toml]
//! ```
//!
//! Exit codes: 0 success, 1 run failure, 2 usage error. `FLUIDNET_THREADS`
//! caps the number of runs executed in parallel.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluidnet::engine::trace_csv;
use fluidnet::marl::{export_policy, import_policy};
use fluidnet::{load_config, run, run_jobs, ControllerKind, Error, RunOptions, ScenarioConfig};

mod tables;

#[derive(Debug, Parser)]
#[command(
    name = "fluidnet",
    version,
    about = "Fluid-antenna multi-cell network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One run; writes kpi.csv, kpi.json and cdf.csv.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        controller: ControllerKind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write trace.csv (one row per evaluation slot and cell).
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        save_policy: Option<PathBuf>,
        #[arg(long)]
        load_policy: Option<PathBuf>,
    },
    /// All four controllers on identical seeds; writes compare.csv.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// All four controllers across user densities; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..))]
        densities: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: Option<&Path>) -> Result<ScenarioConfig, String> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            load_config(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn configure_threads() {
    if let Some(n) = std::env::var("FLUIDNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn collect(
    results: Vec<fluidnet::Result<fluidnet::RunReport>>,
) -> Result<Vec<fluidnet::RunReport>, String> {
    results
        .into_iter()
        .collect::<Result<Vec<_>, Error>>()
        .map_err(|e| e.to_string())
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run {
            config,
            controller,
            seed,
            out,
            trace,
            save_policy,
            load_policy,
        } => {
            let mut cfg = read_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let initial_policy = match load_policy {
                Some(p) => {
                    let text =
                        fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    Some(import_policy(&text, cfg.num_cells).map_err(|e| e.to_string())?)
                }
                None => None,
            };
            let report = run(
                &cfg,
                controller,
                RunOptions {
                    trace,
                    initial_policy,
                    ..Default::default()
                },
            )
            .map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write(&out, "kpi.csv", &report.kpi.to_csv())?;
            write(&out, "kpi.json", &report.kpi.to_json())?;
            write(&out, "cdf.csv", &report.kpi.cdf_csv())?;
            if let Some(rows) = &report.trace {
                write(&out, "trace.csv", &trace_csv(rows))?;
            }
            if let Some(path) = save_policy {
                let tables = report
                    .policy
                    .as_ref()
                    .ok_or_else(|| "--save-policy requires --controller marl".to_owned())?;
                let refs: Vec<_> = tables.iter().collect();
                fs::write(&path, export_policy(&refs))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(())
        }
        Command::Compare { config, seeds, out } => {
            let cfg = read_config(config.as_deref())?;
            let jobs: Vec<_> = ControllerKind::ALL
                .iter()
                .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
                .map(|(k, s)| {
                    (
                        ScenarioConfig {
                            master_seed: s,
                            ..cfg.clone()
                        },
                        k,
                    )
                })
                .collect();
            let reports = collect(run_jobs(&jobs))?;
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write(&out, "compare.csv", &tables::compare_csv(&reports))
        }
        Command::Sweep {
            config,
            densities,
            seeds,
            out,
        } => {
            let cfg = read_config(config.as_deref())?;
            let mut jobs = Vec::new();
            for &d in &densities {
                for k in ControllerKind::ALL {
                    for &s in &seeds {
                        let job = ScenarioConfig {
                            users_per_cell: d as usize,
                            master_seed: s,
                            ..cfg.clone()
                        };
                        jobs.push((job, k));
                    }
                }
            }
            let reports = collect(run_jobs(&jobs))?;
            let rows: Vec<_> = jobs
                .iter()
                .map(|(c, _)| c.users_per_cell)
                .zip(reports.iter())
                .collect();
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write(&out, "sweep.csv", &tables::sweep_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
