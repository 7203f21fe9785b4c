//! `rsps`: run, inspect and validate distributed subgradient experiments.
//!
//! Exit status: 0 on success, 1 when a standing assumption or a recorded
//! bound check fails, 2 on usage or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use rsps_core::graph::{custom_row_weights, uniform_row_weights};
use rsps_core::harness::{analyze_run_dir, prepare, run_experiment, solve_reference, spectral_analysis, validate_config, ExperimentConfig};
use rsps_core::{DirectedGraph, Error};

#[derive(Debug, Parser)]
#[command(name = "rsps", version, about = "Rescaled distributed projected subgradient over row-stochastic digraphs")]
struct Cli {
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured algorithm and write the run directory.
    Run { config: PathBuf },
    /// Recompute fits from a run directory and print the bound-check table.
    Analyze { run_dir: PathBuf },
    /// Print the Perron vector, |lambda_2|, C, lambda and eta of a graph file.
    Spectral {
        graph: PathBuf,
        /// Horizon of the decay-constant fit.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Solve for the reference (x*, F*) only.
    Oracle { config: PathBuf },
    /// Check connectivity, weights, step-size conditions and feasibility.
    Validate { config: PathBuf },
}

enum Failure {
    Assumption(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_assumption_violation() {
            Failure::Assumption(e.to_string())
        } else {
            Failure::Runtime(e)
        }
    }
}

fn load_config(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let outcome = run_experiment(&cfg)?;
            if !cli.quiet {
                println!("wrote {}", cfg.output_dir.display());
                println!("F* = {:.10}", outcome.oracle.reference.f_star);
                for s in &outcome.summary.runs {
                    println!(
                        "{:<6} accuracy {:.3e}  rel. objective error {:.3e}  checks {}",
                        s.algorithm.label(),
                        s.final_accuracy,
                        s.final_relative_obj_err,
                        if s.checks_passed { "passed" } else { "FAILED" }
                    );
                }
            }
            if outcome.summary.all_checks_passed {
                Ok(())
            } else {
                Err(Failure::Assumption("a bound check failed; see summary.json".into()))
            }
        }
        Command::Analyze { run_dir } => {
            let analysis = analyze_run_dir(run_dir)?;
            if !cli.quiet {
                print!("{analysis}");
            }
            if analysis.all_passed() {
                Ok(())
            } else {
                Err(Failure::Assumption("some bound checks failed".into()))
            }
        }
        Command::Spectral { graph, horizon } => {
            let (g, weights) = DirectedGraph::load_edge_list(graph)?;
            if !g.is_strongly_connected() {
                return Err(Failure::Assumption("graph is not strongly connected (Assumption 2)".into()));
            }
            let w = match weights {
                Some(rows) => custom_row_weights(&g, &rows)?,
                None => uniform_row_weights(&g)?,
            };
            let sp = spectral_analysis(&w, *horizon)?;
            println!("pi = {}", fmt_vec(&sp.pi));
            println!("|lambda_2| = {:.6}", sp.lambda2_mod);
            println!("C = {:.6}", sp.c);
            println!("lambda = {:.6}", sp.lambda);
            println!("eta = {:.6}", sp.eta);
            println!("t0 = {}", sp.t0);
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out).map_err(Error::from)?;
                let text = serde_json::to_string_pretty(&sp).map_err(Error::from)?;
                std::fs::write(out.join("spectral.json"), text + "\n").map_err(Error::from)?;
            }
            Ok(())
        }
        Command::Oracle { config } => {
            let cfg = load_config(cli, config)?;
            let setup = prepare(&cfg)?;
            let report = solve_reference(&cfg, &setup)?;
            println!("F* = {:.12}", report.reference.f_star);
            println!("x* = {}", fmt_vec(&report.reference.x_star));
            println!("max set distance = {:.2e}", report.max_set_distance);
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out).map_err(Error::from)?;
                let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
                std::fs::write(out.join("reference.json"), text + "\n").map_err(Error::from)?;
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(cli, config)?;
            let report = validate_config(&cfg)?;
            print!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Assumption("assumption check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet { LevelFilter::Error } else { LevelFilter::Info })
        .parse_default_env()
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assumption(msg)) => {
            eprintln!("rsps: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("rsps: {e}");
            ExitCode::from(2)
        }
    }
}
