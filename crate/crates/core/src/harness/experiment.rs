//! End-to-end experiment runs, persistence and post-hoc analysis.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OracleSpec};
use super::problem::{build_graph, build_weights, generate_problem, GeneratedProblem};
use crate::diagnostics::{fit_decay_order, DecayFit, DiagnosticContext, Reference, RunLog, RunSummary};
use crate::dynamics::{centralized_projected_subgradient, run, Algorithm, LogOptions, NetworkState, StepSchedule};
use crate::error::{Error, Result};
use crate::graph::{default_horizon, estimate_decay_constants, second_eigenvalue_modulus, DirectedGraph, SpectralData, WeightMatrix};
use crate::Vector;

/// Everything that precedes the reference solve.
#[derive(Debug, Clone)]
pub struct Setup {
    pub graph: DirectedGraph,
    pub weights: WeightMatrix,
    pub spectral: SpectralData,
    pub generated: GeneratedProblem,
    /// `x_i(0)`, all zero.
    pub initial: Vec<Vector>,
}

impl Setup {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

pub fn spectral_analysis(w: &WeightMatrix, horizon: Option<usize>) -> Result<SpectralData> {
    let horizon = horizon.unwrap_or_else(|| default_horizon(w.n(), second_eigenvalue_modulus(w)));
    estimate_decay_constants(w, horizon)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    let (graph, file_weights) = build_graph(cfg).map_err(|e| e.in_phase("graph"))?;
    let weights = build_weights(cfg, &graph, file_weights).map_err(|e| e.in_phase("weights"))?;
    let spectral = spectral_analysis(&weights, cfg.spectral_horizon).map_err(|e| e.in_phase("spectral analysis"))?;
    let n = graph.n();
    let generated = generate_problem(cfg, n).map_err(|e| e.in_phase("problem generation"))?;
    let initial = vec![Vector::zeros(generated.problem.dim()); n];
    Ok(Setup {
        graph,
        weights,
        spectral,
        generated,
        initial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub reference: Reference,
    /// `None` when the reference was supplied externally.
    pub rounds: Option<usize>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    /// Largest distance of `x*` to an agent's set.
    pub max_set_distance: f64,
}

/// Default oracle scale: inverse curvature bound for logistic problems,
/// `1 / L` otherwise.
pub fn default_oracle_scale(gp: &GeneratedProblem) -> f64 {
    match gp.smoothness {
        Some(s) if s > 0.0 => 1.0 / s,
        _ => 1.0 / gp.problem.aggregate.lipschitz().max(1e-12),
    }
}

pub fn solve_reference(cfg: &ExperimentConfig, setup: &Setup) -> Result<OracleReport> {
    let problem = &setup.generated.problem;
    let fam = &problem.family;
    let report = match &cfg.oracle {
        OracleSpec::Given { x_star, f_star } => {
            if x_star.len() != problem.dim() {
                return Err(Error::DimensionMismatch {
                    expected: problem.dim(),
                    found: x_star.len(),
                });
            }
            OracleReport {
                reference: Reference {
                    x_star: x_star.clone(),
                    f_star: *f_star,
                },
                rounds: None,
                c: None,
                gamma: None,
                max_set_distance: 0.0,
            }
        }
        OracleSpec::Solve { rounds, c, gamma } => {
            let c = c.unwrap_or_else(|| default_oracle_scale(&setup.generated));
            let sched = StepSchedule::polynomial_decay(c, *gamma)?;
            let x0 = fam.project_intersection(&Vector::zeros(problem.dim()), 1e-12)?;
            let (x, f) = centralized_projected_subgradient(&problem.aggregate, fam, &sched, x0, *rounds)?;
            OracleReport {
                reference: Reference::new(x, f),
                rounds: Some(*rounds),
                c: Some(c),
                gamma: Some(*gamma),
                max_set_distance: 0.0,
            }
        }
    };
    let x = report.reference.x_star();
    Ok(OracleReport {
        max_set_distance: fam.max_distance(&x)?,
        ..report
    })
}

/// Runs one algorithm of the experiment.
pub fn run_algorithm(cfg: &ExperimentConfig, setup: &Setup, ctx: &DiagnosticContext, algorithm: Algorithm) -> Result<RunLog> {
    let n = setup.n();
    let sched = cfg.schedule_for(algorithm, n)?;
    let ns0 = NetworkState::new(setup.initial.clone(), cfg.seed)?;
    let log = LogOptions {
        log_every: cfg.log_every,
        snapshot_every: cfg.snapshot_every,
    };
    run(ns0, &setup.weights, &setup.generated.problem, &sched, algorithm, cfg.rounds, &log, ctx)
        .map_err(|e| e.in_phase(format!("run {}", algorithm.label())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: Option<String>,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub rounds: usize,
    pub lipschitz: f64,
    pub spectral: SpectralData,
    pub oracle: OracleReport,
    pub runs: Vec<RunSummary>,
    pub all_checks_passed: bool,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub setup: Setup,
    pub oracle: OracleReport,
    pub logs: Vec<RunLog>,
    pub summary: ExperimentSummary,
}

impl ExperimentOutcome {
    pub fn log(&self, algorithm: Algorithm) -> Option<&RunLog> {
        self.logs.iter().find(|l| l.algorithm == algorithm)
    }
}

/// Builds the setup, solves for the reference and runs every configured
/// algorithm. Nothing is written to disk.
pub fn run_experiment_in_memory(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let setup = prepare(cfg)?;
    let oracle = solve_reference(cfg, &setup).map_err(|e| e.in_phase("oracle"))?;
    log::info!("reference F* = {:.10}", oracle.reference.f_star);
    let ctx = DiagnosticContext::new(
        setup.spectral.clone(),
        &setup.generated.problem,
        setup.initial.clone(),
        oracle.reference.clone(),
    )?;
    let mut logs = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let log = run_algorithm(cfg, &setup, &ctx, alg)?;
        log::info!(
            "{}: accuracy {:.3e}, objective error {:.3e}",
            alg.label(),
            log.last().accuracy,
            log.last().max_obj_err()
        );
        logs.push(log);
    }
    let f_star = oracle.reference.f_star;
    let runs: Vec<RunSummary> = logs.iter().map(|l| l.summary(f_star)).collect();
    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        n: setup.n(),
        dim: setup.generated.problem.dim(),
        rounds: cfg.rounds,
        lipschitz: setup.generated.problem.lipschitz(),
        spectral: setup.spectral.clone(),
        oracle: oracle.clone(),
        all_checks_passed: runs.iter().all(|r| !r.algorithm.is_rescaled() || r.checks_passed),
        runs,
    };
    Ok(ExperimentOutcome {
        setup,
        oracle,
        logs,
        summary,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes the run directory: the resolved config, graph, reference, one
/// metrics CSV per algorithm plus accuracy and snapshot tables, and
/// `summary.json`.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), cfg.to_json()? + "\n")?;
    std::fs::write(dir.join("graph.txt"), outcome.setup.graph.to_edge_list())?;
    write_json(&dir.join("reference.json"), &outcome.oracle)?;
    for log in &outcome.logs {
        let label = log.algorithm.label();
        log.write_csv(dir.join(format!("{label}.csv")))?;
        log.write_accuracy_csv(dir.join(format!("{label}_accuracy.csv")))?;
        log.write_snapshots_csv(dir.join(format!("{label}_snapshots.csv")))?;
    }
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = run_experiment_in_memory(cfg)?;
    let dir = cfg.resolve_output_dir();
    write_outputs(cfg, &outcome, &dir).map_err(|e| e.in_phase(format!("writing {}", dir.display())))?;
    Ok(outcome)
}

impl ExperimentConfig {
    pub fn resolve_output_dir(&self) -> PathBuf {
        self.output_dir.clone()
    }
}

/// One line of the `analyze` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub algorithm: Algorithm,
    pub check: String,
    pub checked: usize,
    pub violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub summary: ExperimentSummary,
    pub rows: Vec<CheckRow>,
    /// Per algorithm: log-log slope of the largest objective error and of
    /// the accuracy over the last decade of logged rounds.
    pub fits: Vec<(Algorithm, Option<DecayFit>, Option<DecayFit>)>,
}

impl Analysis {
    /// Bound checks only bind the rescaled methods.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().filter(|r| r.algorithm.is_rescaled()).all(|r| r.passed)
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<7} {:<22} {:>9} {:>10}  result", "alg", "check", "checked", "violations")?;
        for r in &self.rows {
            let verdict = match (r.passed, r.algorithm.is_rescaled()) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "n/a",
            };
            writeln!(f, "{:<7} {:<22} {:>9} {:>10}  {verdict}", r.algorithm.label(), r.check, r.checked, r.violations)?;
        }
        writeln!(f)?;
        writeln!(f, "{:<7} {:>16} {:>16}", "alg", "obj_err slope", "accuracy slope")?;
        let show = |fit: &Option<DecayFit>| fit.map_or_else(|| "-".to_string(), |d| format!("{:.3} (r2 {:.2})", d.slope, d.r2));
        for (alg, obj, acc) in &self.fits {
            writeln!(f, "{:<7} {:>16} {:>16}", alg.label(), show(obj), show(acc))?;
        }
        Ok(())
    }
}

fn read_columns(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{c}`", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let v = rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            out[k].push(v);
        }
    }
    Ok(out)
}

/// Re-reads a run directory, recomputes decay fits from the CSVs and
/// tabulates the recorded bound checks.
pub fn analyze_run_dir(dir: &Path) -> Result<Analysis> {
    let text = std::fs::read_to_string(dir.join("summary.json"))
        .map_err(|e| Error::from(e).in_phase(format!("reading {}", dir.join("summary.json").display())))?;
    let summary: ExperimentSummary = serde_json::from_str(&text)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for run in &summary.runs {
        let c = &run.checks;
        for (name, tally) in [
            ("z_envelope", &c.z_envelope),
            ("gamma_recursion", &c.gamma_recursion),
            ("consensus_envelope", &c.consensus_envelope),
            ("objective_bound", &c.objective_bound),
            ("local_objective_bound", &c.local_objective_bound),
            ("feasibility", &c.feasibility),
        ] {
            rows.push(CheckRow {
                algorithm: run.algorithm,
                check: name.to_string(),
                checked: tally.checked,
                violations: tally.violations,
                passed: tally.passed(),
            });
        }
        let label = run.algorithm.label();
        let obj_cols: Vec<String> = (0..summary.n).map(|i| format!("obj_err_{i}")).collect();
        let mut cols: Vec<&str> = vec!["t"];
        cols.extend(obj_cols.iter().map(String::as_str));
        let main = read_columns(&dir.join(format!("{label}.csv")), &cols)?;
        let acc = read_columns(&dir.join(format!("{label}_accuracy.csv")), &["t", "accuracy"])?;
        let t_max = main[0].last().copied().unwrap_or(0.0);
        let window = ((t_max / 10.0).max(1.0), t_max);
        let obj_series: Vec<(f64, f64)> = (0..main[0].len())
            .map(|k| (main[0][k], main[1..].iter().map(|c| c[k]).fold(0.0, f64::max)))
            .collect();
        let acc_series: Vec<(f64, f64)> = acc[0].iter().copied().zip(acc[1].iter().copied()).collect();
        fits.push((
            run.algorithm,
            fit_decay_order(&obj_series, window).ok(),
            fit_decay_order(&acc_series, window).ok(),
        ));
    }
    Ok(Analysis { summary, rows, fits })
}

/// One assumption check of `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationItem {
    pub name: String,
    pub passed: bool,
    /// Informational items never fail validation.
    pub fatal: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed || !i.fatal)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            let tag = match (i.passed, i.fatal) {
                (true, _) => "ok  ",
                (false, true) => "FAIL",
                (false, false) => "note",
            };
            writeln!(f, "[{tag}] {}: {}", i.name, i.detail)?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions of a config without running anything.
/// Only I/O and parse failures are returned as errors.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let mut items = Vec::new();
    let mut push = |name: &str, passed: bool, fatal: bool, detail: String| {
        items.push(ValidationItem {
            name: name.to_string(),
            passed,
            fatal,
            detail,
        })
    };
    let (graph, file_weights) = build_graph(cfg)?;
    let connected = graph.is_strongly_connected();
    push(
        "Assumption 2 (strongly connected digraph)",
        connected,
        true,
        if connected {
            format!("{} nodes, {} edges including self-loops", graph.n(), graph.edges().count())
        } else {
            "some node cannot reach every other node".into()
        },
    );
    let weights = if connected {
        match build_weights(cfg, &graph, file_weights) {
            Ok(w) => {
                push("Assumption 4 (row-stochastic weights, positive self-weights)", true, true, "rows sum to 1 within 1e-12".into());
                Some(w)
            }
            Err(e) if e.is_assumption_violation() => {
                push("Assumption 4 (row-stochastic weights, positive self-weights)", false, true, e.to_string());
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    if let Some(w) = &weights {
        match spectral_analysis(w, cfg.spectral_horizon) {
            Ok(sp) => push(
                "spectral data",
                true,
                false,
                format!("|lambda_2| = {:.4}, C = {:.4}, eta = {:.3}, pi_max/pi_min = {:.3}", sp.lambda2_mod, sp.c, sp.eta, sp.pi_max() / sp.pi_min()),
            ),
            Err(e) => push("spectral data", false, true, e.to_string()),
        }
    }
    match generate_problem(cfg, graph.n()) {
        Ok(gp) => {
            let d = gp.problem.family.max_distance(&gp.feasible_point)?;
            push(
                "Assumption 1(a) (nonempty intersection)",
                d <= 1e-8,
                true,
                format!("witness at distance {d:.2e} from every set"),
            );
        }
        Err(e) if e.is_assumption_violation() || matches!(e, Error::DimensionMismatch { .. } | Error::Config(_)) => {
            push("Assumption 1(a) (nonempty intersection)", false, true, e.to_string())
        }
        Err(e) => return Err(e),
    }
    let n = graph.n();
    for (label, spec) in [("schedule", &cfg.schedule), ("dps_schedule", &cfg.dps_schedule)] {
        match spec.resolve(n) {
            Ok(s) => push(
                &format!("Assumption 5 ({label})"),
                s.satisfies_assumption5(),
                false,
                if s.satisfies_assumption5() {
                    "nonsummable and square-summable".into()
                } else {
                    "not square-summable or not nonsummable; asymptotic convergence is not guaranteed".into()
                },
            ),
            Err(e) => push(&format!("Assumption 5 ({label})"), false, true, e.to_string()),
        }
    }
    Ok(ValidationReport { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{GraphSource, OracleSpec};

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::demo();
        cfg.rounds = 300;
        cfg.log_every = 50;
        cfg.snapshot_every = 100;
        cfg.oracle = OracleSpec::Solve {
            rounds: 5_000,
            c: None,
            gamma: 0.75,
        };
        cfg
    }

    #[test]
    fn experiment_writes_all_outputs_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg();
        cfg.output_dir = dir.path().join("a");
        run_experiment(&cfg).unwrap();
        cfg.output_dir = dir.path().join("b");
        run_experiment(&cfg).unwrap();
        for f in ["alg1.csv", "alg2.csv", "dps_a.csv", "dps_b_accuracy.csv", "alg1_snapshots.csv", "summary.json"] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        let header = std::fs::read_to_string(dir.path().join("a/alg1.csv")).unwrap();
        assert!(header.starts_with("t,F_xbar,F_err_s,consensus_err,z_err,beta,gamma,E_t,obj_err_0,"));
        let analysis = analyze_run_dir(&dir.path().join("a")).unwrap();
        assert_eq!(analysis.rows.len(), 24);
        assert_eq!(analysis.fits.len(), 4);
        assert!(analysis.to_string().contains("feasibility"));
    }

    #[test]
    fn validation_flags_disconnected_graph() {
        let mut cfg = small_cfg();
        cfg.remove_edges = vec![(1, 0)];
        let report = validate_config(&cfg).unwrap();
        assert!(!report.passed());
        assert!(report.to_string().contains("Assumption 2"));

        let report = validate_config(&small_cfg()).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn given_reference_is_used_verbatim() {
        let mut cfg = small_cfg();
        cfg.graph = GraphSource::Complete { n: 2 };
        cfg.oracle = OracleSpec::Given {
            x_star: vec![0.0; 13],
            f_star: 1.0,
        };
        let setup = prepare(&cfg).unwrap();
        let rep = solve_reference(&cfg, &setup).unwrap();
        assert_eq!(rep.reference.f_star, 1.0);
        assert!(rep.rounds.is_none());
    }
}
