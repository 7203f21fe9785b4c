//! Synchronous round updates of the distributed methods.
//!
//! Every round reads the round-`t` snapshot of all agents and writes round
//! `t + 1`; no agent sees a partially updated neighbour.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticContext, Monitor, RunLog};
use crate::error::{check_dim, Error, Result};
use crate::graph::WeightMatrix;
use crate::objectives::CostFunction;
use crate::sets::SetFamily;
use crate::Vector;

/// Iterates whose norm exceeds this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha(t) = c (t + 1)^(-gamma)`
    PolynomialDecay { c: f64, gamma: f64 },
}

impl StepSchedule {
    /// A zero constant step is allowed; it turns every method into
    /// projected consensus.
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidSchedule(format!("constant step {alpha} must be >= 0")));
        }
        Ok(StepSchedule::Constant { alpha })
    }

    pub fn polynomial_decay(c: f64, gamma: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidSchedule(format!("scale {c} must be positive")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidSchedule(format!("exponent {gamma} outside (0, 1]")));
        }
        Ok(StepSchedule::PolynomialDecay { c, gamma })
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            StepSchedule::Constant { alpha } => Self::constant(alpha),
            StepSchedule::PolynomialDecay { c, gamma } => Self::polynomial_decay(c, gamma),
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::PolynomialDecay { c, gamma } => c * ((t + 1) as f64).powf(-gamma),
        }
    }

    /// Nonsummable but square-summable (`gamma in (0.5, 1]`).
    pub fn satisfies_assumption5(&self) -> bool {
        matches!(*self, StepSchedule::PolynomialDecay { gamma, .. } if gamma > 0.5 && gamma <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub x: Vector,
    /// Row estimate of the Perron vector; starts at `e_id`.
    pub z: Vector,
}

impl AgentState {
    pub fn z_self(&self) -> f64 {
        self.z[self.id]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: usize,
    pub agents: Vec<AgentState>,
    pub rng_seed: u64,
}

impl NetworkState {
    /// Round-0 state with `z_i(0) = e_i` of length `n`.
    pub fn new(initial: Vec<Vector>, rng_seed: u64) -> Result<Self> {
        let n = initial.len();
        Self::with_estimate_len(initial, n, rng_seed)
    }

    /// Variant for agents that only know an upper bound `z_len >= n` on the
    /// network size; the padding coordinates stay zero.
    pub fn with_estimate_len(initial: Vec<Vector>, z_len: usize, rng_seed: u64) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::Config("network needs at least one agent".into()));
        }
        if z_len < n {
            return Err(Error::Config(format!("estimate length {z_len} below agent count {n}")));
        }
        let dim = initial[0].len();
        for x in &initial {
            check_dim(dim, x.len())?;
        }
        let agents = initial
            .into_iter()
            .enumerate()
            .map(|(id, x)| {
                let mut z = Vector::zeros(z_len);
                z[id] = 1.0;
                AgentState { id, x, z }
            })
            .collect();
        Ok(Self { t: 0, agents, rng_seed })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents[0].x.len()
    }

    pub fn xs(&self) -> Vec<&Vector> {
        self.agents.iter().map(|a| &a.x).collect()
    }
}

/// Costs, constraint sets and the aggregate objective `F = sum_i f_i`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub costs: Vec<CostFunction>,
    pub family: SetFamily,
    pub aggregate: CostFunction,
}

impl Problem {
    pub fn new(costs: Vec<CostFunction>, family: SetFamily) -> Result<Self> {
        if costs.len() != family.len() {
            return Err(Error::Config(format!(
                "{} costs but {} constraint sets",
                costs.len(),
                family.len()
            )));
        }
        for c in &costs {
            check_dim(family.dim(), c.dim())?;
        }
        let aggregate = CostFunction::sum(costs.clone())?;
        Ok(Self {
            costs,
            family,
            aggregate,
        })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Common subgradient bound `L = max_i L_i`.
    pub fn lipschitz(&self) -> f64 {
        self.costs.iter().map(CostFunction::lipschitz).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Mix, subgradient at the mixed point rescaled by `1 / z_ii`, project.
    #[serde(rename = "alg1")]
    Algorithm1,
    /// Rescaled subgradient step at the own iterate, then mix, project.
    #[serde(rename = "alg2")]
    Algorithm2,
    #[serde(rename = "dps_a")]
    DpsA,
    #[serde(rename = "dps_b")]
    DpsB,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Algorithm1,
        Algorithm::Algorithm2,
        Algorithm::DpsA,
        Algorithm::DpsB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Algorithm1 => "alg1",
            Algorithm::Algorithm2 => "alg2",
            Algorithm::DpsA => "dps_a",
            Algorithm::DpsB => "dps_b",
        }
    }

    /// The rescaled methods, for which the convergence theory applies.
    pub fn is_rescaled(self) -> bool {
        matches!(self, Algorithm::Algorithm1 | Algorithm::Algorithm2)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpsVariant {
    /// Consensus, then subgradient step.
    A,
    /// Subgradient step, then consensus.
    B,
}

/// Result of one synchronous round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub next: NetworkState,
    /// Points handed to each agent's projection.
    pub pre_projection: Vec<Vector>,
    pub alpha: f64,
}

impl RoundOutput {
    /// `phi_i(t) = x_i(t+1) - (pre-projection point)`.
    pub fn projection_errors(&self) -> Vec<Vector> {
        self.next
            .agents
            .iter()
            .zip(&self.pre_projection)
            .map(|(a, pre)| &a.x - pre)
            .collect()
    }

    /// `beta(t) = sum_i ||phi_i(t)||`.
    pub fn beta(&self) -> f64 {
        self.next
            .agents
            .iter()
            .zip(&self.pre_projection)
            .map(|(a, pre)| (&a.x - pre).norm())
            .sum()
    }

    pub fn into_state(self) -> NetworkState {
        self.next
    }
}

fn check_round_inputs(ns: &NetworkState, w: &WeightMatrix, fam: &SetFamily, costs: &[CostFunction]) -> Result<()> {
    let n = ns.n();
    check_dim(n, w.n())?;
    check_dim(n, fam.len())?;
    check_dim(n, costs.len())?;
    for a in &ns.agents {
        check_dim(fam.dim(), a.x.len())?;
    }
    Ok(())
}

/// `sum_j w_ij v_j` over the in-neighbourhood of `i`.
fn mix(w: &WeightMatrix, i: usize, vs: &[&Vector]) -> Vector {
    let mut acc = Vector::zeros(vs[0].len());
    for (j, v) in vs.iter().enumerate() {
        let wij = w.get(i, j);
        if wij != 0.0 {
            acc.axpy(wij, v, 1.0);
        }
    }
    acc
}

fn z_self(agent: &AgentState) -> Result<f64> {
    let z = agent.z_self();
    if z > 0.0 {
        Ok(z)
    } else {
        Err(Error::CorruptEstimate { agent: agent.id, value: z })
    }
}

/// Projects the pre-projection points and mixes the `z` rows.
fn finish_round(ns: &NetworkState, w: &WeightMatrix, fam: &SetFamily, pre: Vec<Vector>, alpha: f64) -> Result<RoundOutput> {
    let zs: Vec<&Vector> = ns.agents.iter().map(|a| &a.z).collect();
    let mut agents = Vec::with_capacity(ns.n());
    for (i, p) in pre.iter().enumerate() {
        let x = fam.sets()[i].project_unchecked(p);
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { agent: i, norm });
        }
        agents.push(AgentState {
            id: i,
            x,
            z: mix(w, i, &zs),
        });
    }
    Ok(RoundOutput {
        next: NetworkState {
            t: ns.t + 1,
            agents,
            rng_seed: ns.rng_seed,
        },
        pre_projection: pre,
        alpha,
    })
}

/// `x_i(t+1) = P_{X_i}(sum_j w_ij x_j(t) - alpha(t) g_i / z_ii(t))` with
/// `g_i` a subgradient of `f_i` at the mixed point; `z_i(t+1) = sum_j w_ij z_j(t)`.
pub fn step_algorithm1(ns: &NetworkState, w: &WeightMatrix, fam: &SetFamily, costs: &[CostFunction], sched: &StepSchedule) -> Result<RoundOutput> {
    check_round_inputs(ns, w, fam, costs)?;
    let alpha = sched.alpha(ns.t);
    let xs = ns.xs();
    let mut pre = Vec::with_capacity(ns.n());
    for (i, agent) in ns.agents.iter().enumerate() {
        let scale = alpha / z_self(agent)?;
        let y = mix(w, i, &xs);
        let g = costs[i].subgradient(&y)?;
        pre.push(y - g * scale);
    }
    finish_round(ns, w, fam, pre, alpha)
}

/// `x_i(t+1) = P_{X_i}(sum_j w_ij (x_j(t) - alpha(t) g_j / z_jj(t)))` with
/// `g_j` a subgradient of `f_j` at `x_j(t)`.
pub fn step_algorithm2(ns: &NetworkState, w: &WeightMatrix, fam: &SetFamily, costs: &[CostFunction], sched: &StepSchedule) -> Result<RoundOutput> {
    check_round_inputs(ns, w, fam, costs)?;
    let alpha = sched.alpha(ns.t);
    // what agent j broadcasts: its iterate after the rescaled subgradient step
    let mut sent = Vec::with_capacity(ns.n());
    for (j, agent) in ns.agents.iter().enumerate() {
        let scale = alpha / z_self(agent)?;
        let g = costs[j].subgradient(&agent.x)?;
        sent.push(&agent.x - g * scale);
    }
    let refs: Vec<&Vector> = sent.iter().collect();
    let pre = (0..ns.n()).map(|i| mix(w, i, &refs)).collect();
    finish_round(ns, w, fam, pre, alpha)
}

/// The unscaled baselines: variant A mixes then steps with the subgradient
/// at the mixed point, variant B steps at the own iterate then mixes.
pub fn step_dps(ns: &NetworkState, w: &WeightMatrix, fam: &SetFamily, costs: &[CostFunction], sched: &StepSchedule, variant: DpsVariant) -> Result<RoundOutput> {
    check_round_inputs(ns, w, fam, costs)?;
    let alpha = sched.alpha(ns.t);
    let xs = ns.xs();
    let pre = match variant {
        DpsVariant::A => (0..ns.n())
            .map(|i| {
                let y = mix(w, i, &xs);
                let g = costs[i].subgradient(&y)?;
                Ok(y - g * alpha)
            })
            .collect::<Result<Vec<_>>>()?,
        DpsVariant::B => {
            let sent = ns
                .agents
                .iter()
                .enumerate()
                .map(|(j, a)| Ok(&a.x - costs[j].subgradient(&a.x)? * alpha))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Vector> = sent.iter().collect();
            (0..ns.n()).map(|i| mix(w, i, &refs)).collect()
        }
    };
    finish_round(ns, w, fam, pre, alpha)
}

pub fn step(ns: &NetworkState, w: &WeightMatrix, problem: &Problem, sched: &StepSchedule, algorithm: Algorithm) -> Result<RoundOutput> {
    let (fam, costs) = (&problem.family, problem.costs.as_slice());
    match algorithm {
        Algorithm::Algorithm1 => step_algorithm1(ns, w, fam, costs, sched),
        Algorithm::Algorithm2 => step_algorithm2(ns, w, fam, costs, sched),
        Algorithm::DpsA => step_dps(ns, w, fam, costs, sched, DpsVariant::A),
        Algorithm::DpsB => step_dps(ns, w, fam, costs, sched, DpsVariant::B),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogOptions {
    pub log_every: usize,
    /// Store full iterates every this many rounds (0 disables).
    pub snapshot_every: usize,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self {
            log_every: 10,
            snapshot_every: 0,
        }
    }
}

/// Applies `rounds` steps of `algorithm`, logging diagnostics at every
/// `log_every`-th round and at the final round.
#[allow(clippy::too_many_arguments)]
pub fn run(ns0: NetworkState, w: &WeightMatrix, problem: &Problem, sched: &StepSchedule, algorithm: Algorithm, rounds: usize, log: &LogOptions, ctx: &DiagnosticContext) -> Result<RunLog> {
    if rounds == 0 {
        return Err(Error::Config("a run needs at least one round".into()));
    }
    if log.log_every == 0 {
        return Err(Error::Config("log_every must be positive".into()));
    }
    let mut monitor = Monitor::new(ctx, problem, *sched, algorithm, ns0.n(), *log, rounds)?;
    let mut state = ns0;
    for t in 0..=rounds {
        // the extra step at t = rounds only supplies beta(T) for the last record
        let out = step(&state, w, problem, sched, algorithm).map_err(|e| e.at_round(t))?;
        monitor.observe(&state, &out).map_err(|e| e.at_round(t))?;
        if t == rounds {
            break;
        }
        state = out.into_state();
    }
    Ok(monitor.finish(state))
}

/// Centralized projected subgradient `x <- P_X(x - alpha(t) g)`, one
/// iteration per call to [`Iterator::next`].
#[derive(Debug)]
pub struct CentralizedIter<'a> {
    f: &'a CostFunction,
    fam: &'a SetFamily,
    sched: StepSchedule,
    x: Vector,
    t: usize,
}

impl<'a> CentralizedIter<'a> {
    pub fn new(f: &'a CostFunction, fam: &'a SetFamily, sched: StepSchedule, x0: Vector) -> Result<Self> {
        check_dim(fam.dim(), x0.len())?;
        check_dim(fam.dim(), f.dim())?;
        Ok(Self { f, fam, sched, x: x0, t: 0 })
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    /// Advances one iteration and returns `F` at the iterate it started from.
    pub fn advance(&mut self) -> Result<f64> {
        let (value, g) = self.f.value_and_subgradient(&self.x)?;
        let alpha = self.sched.alpha(self.t);
        let pre = &self.x - g * alpha;
        self.x = self.fam.project_intersection(&pre, 1e-12)?;
        self.t += 1;
        Ok(value)
    }
}

/// Runs `rounds` iterations from `x0` and returns the best iterate seen
/// (among `x(0)..x(rounds)`) and its value.
pub fn centralized_projected_subgradient(f: &CostFunction, fam: &SetFamily, sched: &StepSchedule, x0: Vector, rounds: usize) -> Result<(Vector, f64)> {
    let mut it = CentralizedIter::new(f, fam, *sched, x0)?;
    let mut best = (it.x().clone(), f64::INFINITY);
    for t in 0..rounds {
        let x_before = it.x().clone();
        let v = it.advance().map_err(|e| e.at_round(t))?;
        if v < best.1 {
            best = (x_before, v);
        }
    }
    let last = f.value(it.x())?;
    if last < best.1 {
        best = (it.x().clone(), last);
    }
    Ok(best)
}
