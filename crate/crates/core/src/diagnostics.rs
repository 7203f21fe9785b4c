//! Per-round metrics, the rate constants of the convergence analysis and
//! on-line checks of the analytical bounds.
//!
//! The constants of the error bound `E(t)` grow like `exp(D1 / (1 - lambda^2))`
//! and overflow `f64` on realistic instances, so the bound is carried in
//! log space and compared through logarithms.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Algorithm, LogOptions, NetworkState, Problem, RoundOutput, StepSchedule};
use crate::error::{check_dim, Error, Result};
use crate::graph::{SpectralData, WeightMatrix};
use crate::Vector;

/// Runs with at most this many rounds also recompute `gamma(t)` from its
/// defining sum at every logged round.
const GAMMA_DIRECT_LIMIT: usize = 20_000;
const GAMMA_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-9;
const ENVELOPE_RTOL: f64 = 1e-9;

/// `sum_j pi_j x_j`.
pub fn weighted_average(xs: &[&Vector], pi: &[f64]) -> Result<Vector> {
    check_dim(xs.len(), pi.len())?;
    let first = xs.first().ok_or_else(|| Error::Config("no points to average".into()))?;
    let mut acc = Vector::zeros(first.len());
    for (x, &p) in xs.iter().zip(pi) {
        check_dim(first.len(), x.len())?;
        acc.axpy(p, x, 1.0);
    }
    Ok(acc)
}

/// Displacement introduced by projecting `pre` to `post`.
pub fn projection_error_phi(post: &Vector, pre: &Vector) -> Vector {
    post - pre
}

/// `sum_k alpha(k) x(k) / sum_k alpha(k)`, maintained incrementally.
#[derive(Debug, Clone)]
pub struct RunningAverage {
    sum_x: Vector,
    sum_alpha: f64,
}

impl RunningAverage {
    pub fn new(dim: usize) -> Self {
        Self {
            sum_x: Vector::zeros(dim),
            sum_alpha: 0.0,
        }
    }

    pub fn push(&mut self, alpha: f64, x: &Vector) {
        self.sum_x.axpy(alpha, x, 1.0);
        self.sum_alpha += alpha;
    }

    pub fn weight(&self) -> f64 {
        self.sum_alpha
    }

    /// `None` until some positive weight was pushed.
    pub fn value(&self) -> Option<Vector> {
        (self.sum_alpha > 0.0).then(|| &self.sum_x / self.sum_alpha)
    }
}

/// Reference solution `(x*, F*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

impl Reference {
    pub fn new(x_star: Vector, f_star: f64) -> Self {
        Self {
            x_star: x_star.iter().copied().collect(),
            f_star,
        }
    }

    pub fn x_star(&self) -> Vector {
        Vector::from_column_slice(&self.x_star)
    }
}

#[derive(Debug, Clone)]
pub struct RateInputs<'a> {
    pub lipschitz: f64,
    pub spectral: &'a SpectralData,
    pub regularity_r: f64,
    pub alpha0: f64,
    pub initial: &'a [Vector],
    pub x_star: &'a Vector,
}

/// Constants of the consensus, projection-error and objective bounds.
///
/// `r1`, `r2`, `c1`, `c2` may be `+inf` in `f64`; their logarithms are
/// always finite and are what [`rate_bound_e`] works with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub l: f64,
    pub c: f64,
    pub lambda: f64,
    pub eta: f64,
    pub pi_min: f64,
    pub n: usize,
    pub r: f64,
    pub alpha0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d2_prime: f64,
    pub b: f64,
    pub a: f64,
    pub d3_prime: f64,
    pub d4: f64,
    pub d6: f64,
    pub d21: f64,
    pub d24: f64,
    /// `ln g_inf(D1, lambda^2)`
    pub ln_g_inf: f64,
    pub ln_r2: f64,
    pub ln_r1: f64,
    pub c0: f64,
    pub ln_c1: f64,
    pub ln_c2: f64,
}

impl RateConstants {
    pub fn r2(&self) -> f64 {
        self.ln_r2.exp()
    }

    pub fn r1(&self) -> f64 {
        self.ln_r1.exp()
    }

    pub fn c1(&self) -> f64 {
        self.ln_c1.exp()
    }

    pub fn c2(&self) -> f64 {
        self.ln_c2.exp()
    }

    /// `ln E` for the given partial sums `sum alpha(k)` and `sum alpha(k)^2`.
    pub fn ln_bound(&self, sum_alpha: f64, sum_alpha_sq: f64) -> f64 {
        log_sum_exp(&[self.ln_c1, self.ln_c2 + sum_alpha_sq.ln()]) - sum_alpha.ln()
    }

    /// `ln (1 + n L / C0)`, the factor between the two objective bounds.
    pub fn ln_objective_factor(&self) -> f64 {
        (self.n as f64 * self.l / self.c0).ln_1p()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln prod_{k >= 0} (1 + d mu^k)`, truncated once `d mu^k < 1e-14`.
pub fn ln_g_infinity(d: f64, mu: f64) -> Result<f64> {
    if !(d >= 0.0) || !(0.0..1.0).contains(&mu) {
        return Err(Error::InvalidSpectral(format!("g_inf needs D >= 0 and mu in [0, 1), got D={d}, mu={mu}")));
    }
    let mut acc = 0.0;
    let mut term = d;
    while term >= 1e-14 {
        acc += term.ln_1p();
        term *= mu;
    }
    Ok(acc)
}

pub fn g_infinity(d: f64, mu: f64) -> Result<f64> {
    ln_g_infinity(d, mu).map(f64::exp)
}

pub fn compute_rate_constants(inp: &RateInputs<'_>) -> Result<RateConstants> {
    let sp = inp.spectral;
    let (c, lambda, eta) = (sp.c, sp.lambda, sp.eta);
    let pi_min = sp.pi_min();
    let n = sp.n();
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidSpectral(format!("lambda = {lambda} outside (0, 1)")));
    }
    if !(pi_min > 0.0) {
        return Err(Error::InvalidSpectral(format!("pi_min = {pi_min} must be positive")));
    }
    if !(c > 0.0 && eta >= 1.0) {
        return Err(Error::InvalidSpectral(format!("need C > 0 and eta >= 1, got C={c}, eta={eta}")));
    }
    if inp.initial.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: inp.initial.len(),
        });
    }
    let (l, r, alpha0) = (inp.lipschitz, inp.regularity_r, inp.alpha0);
    let nf = n as f64;

    let d1 = nf * c * l * eta;
    let d2 = 2.0 * l * eta;
    let d3 = l * l * eta * eta + nf * l * c * eta;
    let d2_prime = d2 + 2.0 * l * r / pi_min;
    let b = (pi_min / nf).sqrt();
    let a = d2_prime * c / ((1.0 - lambda) * b);
    let d3_prime = d3 + a * a / 2.0;
    let d4 = c * inp.initial.iter().map(|x| x.norm()).sum::<f64>();
    let d6 = pi_min / 2.0;
    let d21 = d2_prime * d1;
    let d24 = d2_prime * d4;

    let ln_g_inf = ln_g_infinity(d1, lambda * lambda)?;
    let ln_r2 = ln_g_inf - std::f64::consts::LN_2;
    let spread: f64 = inp
        .initial
        .iter()
        .zip(&sp.pi)
        .map(|(x, p)| p * (x - inp.x_star).norm_squared())
        .sum();
    let ln_r1 = ln_r2 + spread.ln();
    let c0 = d6 * (1.0 - lambda) / (2.0 * nf * (r * nf + 1.0) * c);
    let ln_c1 = log_sum_exp(&[
        ln_r1,
        ln_r2 + (d24 * alpha0 / (1.0 - lambda)).ln(),
        (d6 * d4 * alpha0 / (2.0 * nf * c)).ln(),
    ]);
    let ln_c2 = log_sum_exp(&[
        ln_r2 + (d21 / (1.0 - lambda) + d3_prime).ln(),
        (d6 / (2.0 * nf) * (d1 / c + 0.25)).ln(),
    ]);
    Ok(RateConstants {
        l,
        c,
        lambda,
        eta,
        pi_min,
        n,
        r,
        alpha0,
        d1,
        d2,
        d3,
        d2_prime,
        b,
        a,
        d3_prime,
        d4,
        d6,
        d21,
        d24,
        ln_g_inf,
        ln_r2,
        ln_r1,
        c0,
        ln_c1,
        ln_c2,
    })
}

/// Partial sums `(sum_{k<=t} alpha(k), sum_{k<=t} alpha(k)^2)`.
pub fn alpha_partial_sums(sched: &StepSchedule, t: usize) -> (f64, f64) {
    (0..=t).fold((0.0, 0.0), |(s1, s2), k| {
        let a = sched.alpha(k);
        (s1 + a, s2 + a * a)
    })
}

/// `E(t) = (C1 + C2 sum alpha^2) / sum alpha` with sums over `k = 0..=t`.
pub fn rate_bound_e(rc: &RateConstants, sched: &StepSchedule, t: usize) -> f64 {
    ln_rate_bound_e(rc, sched, t).exp()
}

pub fn ln_rate_bound_e(rc: &RateConstants, sched: &StepSchedule, t: usize) -> f64 {
    let (s1, s2) = alpha_partial_sums(sched, t);
    rc.ln_bound(s1, s2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

fn least_squares(pts: &[(f64, f64)]) -> Result<DecayFit> {
    if pts.len() < 2 {
        return Err(Error::InvalidSeries(format!("{} points in fit window, need 2", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidSeries("abscissae in window are all equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: pts.len(),
    })
}

fn window_points(series: &[(f64, f64)], window: (f64, f64)) -> impl Iterator<Item = (f64, f64)> + '_ {
    series
        .iter()
        .copied()
        .filter(move |&(t, _)| t >= window.0 && t <= window.1)
}

/// Least-squares slope of `ln value` against `ln t` over `t` in `window`.
pub fn fit_decay_order(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let mut pts = Vec::new();
    for (t, v) in window_points(series, window) {
        if !(v > 0.0) || !(t > 0.0) {
            return Err(Error::InvalidSeries(format!("nonpositive point ({t}, {v}) in window")));
        }
        pts.push((t.ln(), v.ln()));
    }
    least_squares(&pts)
}

/// Least-squares slope of `ln value` against `t`; `exp(slope)` is the
/// per-round contraction factor.
pub fn fit_geometric_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let mut pts = Vec::new();
    for (t, v) in window_points(series, window) {
        if !(v > 0.0) {
            return Err(Error::InvalidSeries(format!("nonpositive value {v} at t = {t}")));
        }
        pts.push((t, v.ln()));
    }
    least_squares(&pts)
}

/// Fixed data a run needs for its diagnostics.
#[derive(Debug, Clone)]
pub struct DiagnosticContext {
    pub spectral: SpectralData,
    pub reference: Reference,
    pub lipschitz: f64,
    pub regularity_r: f64,
    pub initial: Vec<Vector>,
    /// Absolute slack on the `z` envelope below which `f64` cannot resolve
    /// the gap to `pi`.
    pub z_floor: f64,
    pub intersection_tol: f64,
}

impl DiagnosticContext {
    pub fn new(spectral: SpectralData, problem: &Problem, initial: Vec<Vector>, reference: Reference) -> Result<Self> {
        check_dim(spectral.n(), problem.n())?;
        check_dim(problem.n(), initial.len())?;
        check_dim(problem.dim(), reference.x_star.len())?;
        Ok(Self {
            spectral,
            reference,
            lipschitz: problem.lipschitz(),
            regularity_r: problem.family.regularity_r(),
            initial,
            z_floor: 1e-12,
            intersection_tol: 1e-12,
        })
    }

    /// Spectral analysis of `w` followed by [`DiagnosticContext::new`].
    pub fn prepare(w: &WeightMatrix, problem: &Problem, initial: Vec<Vector>, reference: Reference) -> Result<Self> {
        Self::new(SpectralData::analyze(w)?, problem, initial, reference)
    }

    pub fn rates(&self, alpha0: f64) -> Result<RateConstants> {
        let x_star = self.reference.x_star();
        compute_rate_constants(&RateInputs {
            lipschitz: self.lipschitz,
            spectral: &self.spectral,
            regularity_r: self.regularity_r,
            alpha0,
            initial: &self.initial,
            x_star: &x_star,
        })
    }
}

/// Metrics of one logged round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub alpha: f64,
    pub f_xbar: f64,
    pub f_err_s: f64,
    pub consensus_err: f64,
    pub max_dist_to_x: f64,
    pub z_err: f64,
    pub beta: f64,
    pub gamma: f64,
    pub ln_e_t: f64,
    /// `|F(x~_i(t)) - F*|`
    pub per_agent_obj_err: Vec<f64>,
    /// `|F(x_i(t)) - F*|`
    pub raw_obj_err: Vec<f64>,
    /// `max_i ||x_i(t) - x*||`
    pub accuracy: f64,
    /// `max_i ||x_i(t) - xbar(t)||`
    pub max_deviation: f64,
    /// Right-hand side of the consensus envelope at `t`.
    pub consensus_envelope: f64,
}

impl RoundRecord {
    pub fn e_t(&self) -> f64 {
        self.ln_e_t.exp()
    }

    pub fn max_obj_err(&self) -> f64 {
        self.per_agent_obj_err.iter().copied().fold(0.0, f64::max)
    }
}

/// Count of evaluations and failures of one bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
}

impl CheckTally {
    fn record(&mut self, t: usize, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    /// `z_err(t) <= C lambda^t`, every round.
    pub z_envelope: CheckTally,
    /// `gamma(t+1) <= lambda gamma(t) + alpha(t) beta(t)`, every round.
    pub gamma_recursion: CheckTally,
    /// `||x_i - xbar|| <= D4 lambda^t + sum lambda^(t-1-s)(D1 alpha(s) + C beta(s))`
    pub consensus_envelope: CheckTally,
    /// `C0 ||x~_i - s~|| + F(s~) - F* <= E(t)`
    pub objective_bound: CheckTally,
    /// `|F(x~_i) - F*| <= E(t)(1 + nL/C0)`
    pub local_objective_bound: CheckTally,
    /// `dist(x_i(t), X_i) <= 1e-9` after every round.
    pub feasibility: CheckTally,
    pub max_infeasibility: f64,
}

impl BoundChecks {
    pub fn all_passed(&self) -> bool {
        [
            &self.z_envelope,
            &self.gamma_recursion,
            &self.consensus_envelope,
            &self.objective_bound,
            &self.local_objective_bound,
            &self.feasibility,
        ]
        .iter()
        .all(|c| c.passed())
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: usize,
    pub xs: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub rounds: usize,
    pub records: Vec<RoundRecord>,
    pub snapshots: Vec<Snapshot>,
    pub checks: BoundChecks,
    pub rates: RateConstants,
    pub final_state: NetworkState,
}

/// Summary written next to the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub rounds: usize,
    pub final_accuracy: f64,
    pub final_max_obj_err: f64,
    pub final_relative_obj_err: f64,
    pub final_consensus_err: f64,
    pub accuracy_slope_last_decade: Option<DecayFit>,
    pub obj_err_slope_last_decade: Option<DecayFit>,
    /// `max_t ln(max_i obj_err / E(t))`, the offset of a proportional bound.
    pub max_ln_obj_err_over_bound: f64,
    pub checks: BoundChecks,
    pub checks_passed: bool,
    pub rates: RateConstants,
}

impl RunLog {
    pub fn last(&self) -> &RoundRecord {
        self.records.last().expect("a run logs at least its final round")
    }

    pub fn series(&self, f: impl Fn(&RoundRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t as f64, f(r))).collect()
    }

    pub fn summary(&self, f_star: f64) -> RunSummary {
        let last = self.last();
        let decade = ((self.rounds as f64 / 10.0).max(1.0), self.rounds as f64);
        let max_ln_ratio = self
            .records
            .iter()
            .filter(|r| r.max_obj_err() > 0.0)
            .map(|r| r.max_obj_err().ln() - r.ln_e_t)
            .fold(f64::NEG_INFINITY, f64::max);
        RunSummary {
            algorithm: self.algorithm,
            schedule: self.schedule,
            rounds: self.rounds,
            final_accuracy: last.accuracy,
            final_max_obj_err: last.max_obj_err(),
            final_relative_obj_err: last.max_obj_err() / f_star.abs(),
            final_consensus_err: last.consensus_err,
            accuracy_slope_last_decade: fit_decay_order(&self.series(|r| r.accuracy), decade).ok(),
            obj_err_slope_last_decade: fit_decay_order(&self.series(RoundRecord::max_obj_err), decade).ok(),
            max_ln_obj_err_over_bound: max_ln_ratio,
            checks: self.checks.clone(),
            checks_passed: self.checks.all_passed(),
            rates: self.rates.clone(),
        }
    }

    pub const CSV_COLUMNS: [&'static str; 8] =
        ["t", "F_xbar", "F_err_s", "consensus_err", "z_err", "beta", "gamma", "E_t"];

    /// Main metrics table, one row per logged round.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.final_state.n();
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = Self::CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((0..n).map(|i| format!("obj_err_{i}")));
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.t.to_string(),
                fmt(r.f_xbar),
                fmt(r.f_err_s),
                fmt(r.consensus_err),
                fmt(r.z_err),
                fmt(r.beta),
                fmt(r.gamma),
                fmt(r.e_t()),
            ];
            row.extend(r.per_agent_obj_err.iter().map(|&v| fmt(v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Accuracy and raw per-agent objective errors, one row per logged round.
    pub fn write_accuracy_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.final_state.n();
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = ["t", "accuracy", "max_dist_to_X", "max_deviation", "ln_E_t"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..n).map(|i| format!("raw_obj_err_{i}")));
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.t.to_string(),
                fmt(r.accuracy),
                fmt(r.max_dist_to_x),
                fmt(r.max_deviation),
                fmt(r.ln_e_t),
            ];
            row.extend(r.raw_obj_err.iter().map(|&v| fmt(v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Full iterates, one row per (snapshot round, agent).
    pub fn write_snapshots_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let dim = self.final_state.dim();
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend((0..dim).map(|k| format!("x_{k}")));
        wtr.write_record(&header)?;
        for s in &self.snapshots {
            for (i, x) in s.xs.iter().enumerate() {
                let mut row = vec![s.t.to_string(), i.to_string()];
                row.extend(x.iter().map(|&v| fmt(v)));
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_summary_json(&self, path: impl AsRef<Path>, f_star: f64) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &self.summary(f_star))?;
        writeln!(file)?;
        Ok(())
    }
}

/// Shortest round-trip representation, so reruns give identical bytes.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Incremental tracker driven by [`crate::dynamics::run`].
pub(crate) struct Monitor<'a> {
    ctx: &'a DiagnosticContext,
    problem: &'a Problem,
    algorithm: Algorithm,
    schedule: StepSchedule,
    log: LogOptions,
    rounds: usize,
    rates: RateConstants,
    ln_objective_factor: f64,
    pi: Vec<f64>,
    x_star: Vector,
    agent_avg: Vec<RunningAverage>,
    xbar_avg: RunningAverage,
    s_avg: RunningAverage,
    s_mass: f64,
    sum_alpha: f64,
    sum_alpha_sq: f64,
    /// `sum_{s<t} lambda^(t-1-s) beta(s)`
    h: f64,
    prev_gamma: Option<(f64, f64, f64)>,
    /// `sum_{s<t} lambda^(t-1-s)(D1 alpha(s) + C beta(s))`
    envelope_tail: f64,
    lambda_t: f64,
    betas: Vec<f64>,
    records: Vec<RoundRecord>,
    snapshots: Vec<Snapshot>,
    checks: BoundChecks,
}

impl<'a> Monitor<'a> {
    pub(crate) fn new(ctx: &'a DiagnosticContext, problem: &'a Problem, schedule: StepSchedule, algorithm: Algorithm, n: usize, log: LogOptions, rounds: usize) -> Result<Self> {
        check_dim(ctx.spectral.n(), n)?;
        let rates = ctx.rates(schedule.alpha(0))?;
        let dim = problem.dim();
        Ok(Self {
            ctx,
            problem,
            algorithm,
            schedule,
            log,
            rounds,
            ln_objective_factor: rates.ln_objective_factor(),
            rates,
            pi: ctx.spectral.pi.clone(),
            x_star: ctx.reference.x_star(),
            agent_avg: vec![RunningAverage::new(dim); n],
            xbar_avg: RunningAverage::new(dim),
            s_avg: RunningAverage::new(dim),
            s_mass: 0.0,
            sum_alpha: 0.0,
            sum_alpha_sq: 0.0,
            h: 0.0,
            prev_gamma: None,
            envelope_tail: 0.0,
            lambda_t: 1.0,
            betas: Vec::new(),
            records: Vec::new(),
            snapshots: Vec::new(),
            checks: BoundChecks::default(),
        })
    }

    /// Consumes round `t`: the state `x(t)` and the step that maps it to `x(t+1)`.
    pub(crate) fn observe(&mut self, state: &NetworkState, out: &RoundOutput) -> Result<()> {
        let t = state.t;
        let alpha = out.alpha;
        let beta = out.beta();
        let lambda = self.rates.lambda;
        let theory = self.algorithm.is_rescaled();

        let z_err = state
            .agents
            .iter()
            .map(|a| (a.z_self() - self.pi[a.id]).abs())
            .fold(0.0, f64::max);
        if theory {
            let bound = self.ctx.spectral.c * self.lambda_t + self.ctx.z_floor;
            self.checks.z_envelope.record(t, z_err <= bound);
        }

        let xs = state.xs();
        for (avg, x) in self.agent_avg.iter_mut().zip(&xs) {
            avg.push(alpha, x);
        }
        let xbar = weighted_average(&xs, &self.pi)?;
        self.xbar_avg.push(alpha, &xbar);
        self.sum_alpha += alpha;
        self.sum_alpha_sq += alpha * alpha;
        self.s_mass += alpha;

        let gamma = alpha * self.h;
        if let Some((g_prev, a_prev, b_prev)) = self.prev_gamma {
            if theory {
                let rhs = lambda * g_prev + a_prev * b_prev;
                self.checks.gamma_recursion.record(t, gamma <= rhs + GAMMA_TOL * rhs.max(1.0));
            }
        }
        self.prev_gamma = Some((gamma, alpha, beta));
        let consensus_envelope = self.rates.d4 * self.lambda_t + self.envelope_tail;

        if theory {
            for a in &out.next.agents {
                let d = self.problem.family.sets()[a.id].distance(&a.x)?;
                self.checks.max_infeasibility = self.checks.max_infeasibility.max(d);
                self.checks.feasibility.record(t + 1, d <= FEASIBILITY_TOL);
            }
        }

        let is_last = t == self.rounds;
        if t.is_multiple_of(self.log.log_every) || is_last {
            let gamma_direct = (self.rounds <= GAMMA_DIRECT_LIMIT).then(|| {
                let s: f64 = self
                    .betas
                    .iter()
                    .enumerate()
                    .map(|(s, b)| lambda.powi((t - 1 - s) as i32) * b)
                    .sum();
                alpha * s
            });
            if let (Some(direct), true) = (gamma_direct, theory) {
                let ok = (direct - gamma).abs() <= GAMMA_TOL * direct.abs().max(1.0);
                self.checks.gamma_recursion.record(t, ok);
            }
            let record = self.log_round(t, state, &xbar, alpha, beta, gamma, z_err, consensus_envelope)?;
            self.records.push(record);
        }
        if (self.log.snapshot_every > 0 && t.is_multiple_of(self.log.snapshot_every)) || is_last {
            self.snapshots.push(Snapshot {
                t,
                xs: xs.iter().map(|x| (*x).clone()).collect(),
            });
        }

        if self.rounds <= GAMMA_DIRECT_LIMIT {
            self.betas.push(beta);
        }
        self.h = lambda * self.h + beta;
        self.envelope_tail = lambda * self.envelope_tail + self.rates.d1 * alpha + self.rates.c * beta;
        self.lambda_t *= lambda;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn log_round(&mut self, t: usize, state: &NetworkState, xbar: &Vector, alpha: f64, beta: f64, gamma: f64, z_err: f64, consensus_envelope: f64) -> Result<RoundRecord> {
        let f = &self.problem.aggregate;
        let fam = &self.problem.family;
        let f_star = self.ctx.reference.f_star;
        let theory = self.algorithm.is_rescaled();

        let s = fam.project_intersection(xbar, self.ctx.intersection_tol)?;
        let f_s = f.value(&s)?;
        let s_tilde = if fam.is_affine() {
            let avg = self.xbar_avg.value().unwrap_or_else(|| xbar.clone());
            fam.project_intersection(&avg, self.ctx.intersection_tol)?
        } else {
            // block approximation: s(t) stands in for s(k) since the last log
            self.s_avg.push(self.s_mass, &s);
            self.s_mass = 0.0;
            self.s_avg.value().unwrap_or_else(|| s.clone())
        };
        let f_s_tilde = f.value(&s_tilde)?;

        let mut consensus_err = 0.0;
        let mut max_deviation: f64 = 0.0;
        let mut max_dist_to_x: f64 = 0.0;
        let mut accuracy: f64 = 0.0;
        let mut raw_obj_err = Vec::with_capacity(state.n());
        for (a, &p) in state.agents.iter().zip(&self.pi) {
            let dev = (&a.x - xbar).norm();
            consensus_err += p * dev;
            max_deviation = max_deviation.max(dev);
            accuracy = accuracy.max((&a.x - &self.x_star).norm());
            raw_obj_err.push((f.value(&a.x)? - f_star).abs());
            max_dist_to_x = max_dist_to_x.max(fam.sets()[a.id].distance(xbar)?);
        }

        let ln_e = self.rates.ln_bound(self.sum_alpha, self.sum_alpha_sq);
        let mut per_agent_obj_err = Vec::with_capacity(state.n());
        for avg in &self.agent_avg {
            let x_tilde = avg.value().unwrap_or_else(|| state.agents[0].x.clone());
            let err = (f.value(&x_tilde)? - f_star).abs();
            if theory {
                let lhs = self.rates.c0 * (&x_tilde - &s_tilde).norm() + f_s_tilde - f_star;
                self.checks.objective_bound.record(t, lhs <= 0.0 || lhs.ln() <= ln_e + 1e-12);
                let ok = err == 0.0 || err.ln() <= ln_e + self.ln_objective_factor + 1e-12;
                self.checks.local_objective_bound.record(t, ok);
            }
            per_agent_obj_err.push(err);
        }
        if theory {
            let ok = max_deviation <= consensus_envelope * (1.0 + ENVELOPE_RTOL) + 1e-12;
            self.checks.consensus_envelope.record(t, ok);
        }

        Ok(RoundRecord {
            t,
            alpha,
            f_xbar: f.value(xbar)?,
            f_err_s: f_s - f_star,
            consensus_err,
            max_dist_to_x,
            z_err,
            beta,
            gamma,
            ln_e_t: ln_e,
            per_agent_obj_err,
            raw_obj_err,
            accuracy,
            max_deviation,
            consensus_envelope,
        })
    }

    pub(crate) fn finish(self, final_state: NetworkState) -> RunLog {
        RunLog {
            algorithm: self.algorithm,
            schedule: self.schedule,
            rounds: self.rounds,
            records: self.records,
            snapshots: self.snapshots,
            checks: self.checks,
            rates: self.rates,
            final_state,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::ConstraintSet;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn spectral(pi: Vec<f64>, lambda: f64, c: f64, eta: f64) -> SpectralData {
        SpectralData {
            pi,
            lambda2_mod: 2.0 * lambda - 1.0,
            lambda,
            c,
            eta,
            horizon: 100,
            t0: 0,
        }
    }

    #[test]
    fn weighted_average_examples() {
        let a = v(&[1.5, -2.0]);
        assert_eq!(weighted_average(&[&a, &a, &a], &[0.2, 0.3, 0.5]).unwrap(), a);
        let (p, q) = (v(&[0.0, 0.0]), v(&[2.0, 2.0]));
        assert_eq!(weighted_average(&[&p, &q], &[0.5, 0.5]).unwrap(), v(&[1.0, 1.0]));
        let (p, q) = (v(&[3.0, 0.0]), v(&[0.0, 3.0]));
        let avg = weighted_average(&[&p, &q], &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!((avg - v(&[1.0, 2.0])).amax() < 1e-15);
        assert!(weighted_average(&[&p], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn phi_examples() {
        let h = ConstraintSet::half_space(v(&[1.0, 0.0]), 0.0).unwrap();
        let pre = v(&[2.0, 5.0]);
        let post = h.project(&pre).unwrap();
        assert_eq!(projection_error_phi(&post, &pre), v(&[-2.0, 0.0]));
        let inside = v(&[-1.0, 5.0]);
        assert_eq!(projection_error_phi(&h.project(&inside).unwrap(), &inside), v(&[0.0, 0.0]));
    }

    #[test]
    fn running_average_examples() {
        let mut ra = RunningAverage::new(1);
        assert!(ra.value().is_none());
        for _ in 0..5 {
            ra.push(0.3, &v(&[4.0]));
        }
        assert!((ra.value().unwrap()[0] - 4.0).abs() < 1e-15);

        let mut ra = RunningAverage::new(1);
        ra.push(1.0, &v(&[0.0]));
        ra.push(1.0, &v(&[2.0]));
        assert_eq!(ra.value().unwrap(), v(&[1.0]));

        let sched = StepSchedule::polynomial_decay(1.0, 0.8).unwrap();
        let hist = [v(&[1.0, 2.0]), v(&[-3.0, 0.5]), v(&[7.0, -1.0])];
        let mut ra = RunningAverage::new(2);
        for (k, x) in hist.iter().enumerate() {
            ra.push(sched.alpha(k), x);
        }
        let (num, den) = hist.iter().enumerate().fold((Vector::zeros(2), 0.0), |(s, d), (k, x)| {
            (s + x * sched.alpha(k), d + sched.alpha(k))
        });
        assert!((ra.value().unwrap() - num / den).amax() < 1e-12);
    }

    fn sample_rates() -> RateConstants {
        let sp = spectral(vec![0.25, 0.75], 0.625, 0.8, 4.0);
        let initial = vec![v(&[1.0, 0.0]), v(&[0.0, 2.0])];
        let x_star = v(&[0.5, 0.5]);
        compute_rate_constants(&RateInputs {
            lipschitz: 1.5,
            spectral: &sp,
            regularity_r: 1.0,
            alpha0: 0.1,
            initial: &initial,
            x_star: &x_star,
        })
        .unwrap()
    }

    #[test]
    fn constant_schedule_bound() {
        let mut rc = sample_rates();
        rc.ln_c1 = 0.0;
        rc.ln_c2 = 0.0;
        let e = rate_bound_e(&rc, &StepSchedule::constant(1.0).unwrap(), 9);
        assert!((e - 1.1).abs() < 1e-12, "{e}");
    }

    #[test]
    fn bound_vanishes_under_square_summable_steps() {
        let rc = sample_rates();
        let sched = StepSchedule::polynomial_decay(1.0, 0.8).unwrap();
        let mut prev = f64::INFINITY;
        let (mut s1, mut s2) = (0.0, 0.0);
        for t in 0..2_000_000usize {
            let a = sched.alpha(t);
            s1 += a;
            s2 += a * a;
            if (t + 1).is_power_of_two() && t > 1000 {
                let e = rc.ln_bound(s1, s2);
                assert!(e < prev);
                prev = e;
            }
        }
        assert!(prev < rc.ln_c2 + 0.5f64.ln());
    }

    #[test]
    fn bound_order_for_inverse_sqrt_steps() {
        let mut rc = sample_rates();
        rc.ln_c1 = 0.0;
        rc.ln_c2 = 0.0;
        let sched = StepSchedule::polynomial_decay(1.0, 0.5).unwrap();
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut series = Vec::new();
        for t in 0..=100_000usize {
            let a = sched.alpha(t);
            s1 += a;
            s2 += a * a;
            if t >= 1000 && t % 100 == 0 {
                let tt = t as f64;
                series.push((tt, rc.ln_bound(s1, s2).exp() / tt.ln()));
            }
        }
        let fit = fit_decay_order(&series, (1e3, 1e5)).unwrap();
        assert!((fit.slope + 0.5).abs() <= 0.1, "{}", fit.slope);
    }

    #[test]
    fn g_infinity_lemma_bounds() {
        assert_eq!(g_infinity(0.0, 0.5).unwrap(), 1.0);
        for &(d, mu) in &[(0.1, 0.25), (1.0, 0.5), (3.0, 0.81), (50.0, 0.9)] {
            let g = ln_g_infinity(d, mu).unwrap();
            let lo = (d / (1.0 - mu)).ln_1p();
            let hi = d / (1.0 - mu);
            assert!(lo <= g + 1e-12 && g <= hi + 1e-12, "{d} {mu}: {lo} {g} {hi}");
        }
        assert!(ln_g_infinity(1.0, 1.0).is_err());
        assert!(ln_g_infinity(-1.0, 0.5).is_err());
    }

    #[test]
    fn rate_constant_identities() {
        let rc = sample_rates();
        assert!((rc.a * rc.b * (1.0 - rc.lambda) - rc.d2_prime * rc.c).abs() < 1e-9 * rc.d2_prime);
        assert!((rc.d1 - 2.0 * 0.8 * 1.5 * 4.0).abs() < 1e-12);
        assert!((rc.d4 - 0.8 * 3.0).abs() < 1e-12);
        let lo = (rc.d1 / (1.0 - rc.lambda.powi(2))).ln_1p();
        assert!(rc.ln_g_inf >= lo - 1e-12);
        for x in [rc.d1, rc.d2, rc.d3, rc.d2_prime, rc.b, rc.a, rc.d3_prime, rc.d4, rc.d6, rc.c0] {
            assert!(x > 0.0 && x.is_finite());
        }
        assert!(rc.ln_c1.is_finite() && rc.ln_c2.is_finite());
    }

    #[test]
    fn huge_constants_stay_finite_in_log_space() {
        let sp = spectral(vec![0.1; 10], 0.99, 2.0, 20.0);
        let initial = vec![v(&[1.0]); 10];
        let x_star = v(&[0.0]);
        let rc = compute_rate_constants(&RateInputs {
            lipschitz: 1e4,
            spectral: &sp,
            regularity_r: 3.0,
            alpha0: 1e-3,
            initial: &initial,
            x_star: &x_star,
        })
        .unwrap();
        assert!(rc.c1().is_infinite());
        assert!(rc.ln_c1.is_finite() && rc.ln_c2.is_finite());
        assert!(rc.ln_bound(10.0, 1.0).is_finite());
    }

    #[test]
    fn rate_constant_errors() {
        let initial = vec![v(&[0.0]); 2];
        let x_star = v(&[1.0]);
        let mk = |sp: &SpectralData| {
            compute_rate_constants(&RateInputs {
                lipschitz: 1.0,
                spectral: sp,
                regularity_r: 1.0,
                alpha0: 0.1,
                initial: &initial,
                x_star: &x_star,
            })
        };
        assert!(mk(&spectral(vec![0.5, 0.5], 1.0, 1.0, 2.0)).is_err());
        assert!(mk(&spectral(vec![0.0, 1.0], 0.5, 1.0, 2.0)).is_err());
        // zero initial states give D4 = 0, which is allowed
        let rc = mk(&spectral(vec![0.5, 0.5], 0.5, 1.0, 2.0)).unwrap();
        assert_eq!(rc.d4, 0.0);
        assert!(rc.ln_c1.is_finite());
    }

    #[test]
    fn decay_fits() {
        let inv: Vec<_> = (1..=100).map(|t| (t as f64, 1.0 / t as f64)).collect();
        let fit = fit_decay_order(&inv, (1.0, 100.0)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        let flat: Vec<_> = (1..=100).map(|t| (t as f64, 3.0)).collect();
        assert!(fit_decay_order(&flat, (1.0, 100.0)).unwrap().slope.abs() < 1e-12);
        let model: Vec<_> = (100..=100_000)
            .step_by(50)
            .map(|t| (t as f64, (t as f64).ln() / (t as f64).sqrt()))
            .collect();
        let s = fit_decay_order(&model, (1e2, 1e5)).unwrap().slope;
        assert!(s > -0.5 && s < -0.35, "{s}");
        let bad = vec![(1.0, 1.0), (2.0, 0.0)];
        assert!(fit_decay_order(&bad, (1.0, 2.0)).is_err());
        assert!(fit_decay_order(&inv, (500.0, 600.0)).is_err());

        let geo: Vec<_> = (0..50).map(|t| (t as f64, 3.0 * 0.7f64.powi(t))).collect();
        let g = fit_geometric_rate(&geo, (0.0, 49.0)).unwrap();
        assert!((g.slope.exp() - 0.7).abs() < 1e-12);
    }
}
