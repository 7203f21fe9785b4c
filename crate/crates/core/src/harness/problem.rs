//! Graph, weight and problem construction from a config.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{CostSpec, ExperimentConfig, GraphSource, ProblemSpec, WeightScheme};
use crate::dynamics::Problem;
use crate::error::{Error, Result};
use crate::graph::{custom_row_weights, uniform_row_weights, DirectedGraph, WeightMatrix};
use crate::objectives::{load_partition, load_training_csv, CostFunction, LogisticLoss};
use crate::sets::{ConstraintSet, SetFamily};
use crate::{Matrix, Vector};

/// Attempts at redrawing a rank-deficient constraint block.
const MAX_REDRAWS: u64 = 64;

/// Loads or generates the digraph, deletes the configured edges and
/// returns it with any weights read from file.
pub fn build_graph(cfg: &ExperimentConfig) -> Result<(DirectedGraph, Option<Vec<Vec<f64>>>)> {
    let (mut g, file_weights) = match &cfg.graph {
        GraphSource::Demo6 => (DirectedGraph::demo6(), None),
        GraphSource::File { path } => DirectedGraph::load_edge_list(cfg.resolve_path(path))?,
        GraphSource::RingWithChords { n, extra_edges } => (DirectedGraph::ring_with_chords(*n, *extra_edges)?, None),
        GraphSource::Complete { n } => (DirectedGraph::complete(*n)?, None),
        GraphSource::RandomStronglyConnected { n, p, seed } => {
            (DirectedGraph::random_strongly_connected(*n, *p, seed.unwrap_or(cfg.seed))?, None)
        }
    };
    for &(i, j) in &cfg.remove_edges {
        g = g.without_edge(i, j)?;
    }
    Ok((g, file_weights))
}

/// Checks strong connectivity and builds `W` per the weight scheme.
pub fn build_weights(cfg: &ExperimentConfig, g: &DirectedGraph, file_weights: Option<Vec<Vec<f64>>>) -> Result<WeightMatrix> {
    if !g.is_strongly_connected() {
        return Err(Error::InvalidGraph(
            "graph is not strongly connected (Assumption 2: fixed, strongly connected digraph)".into(),
        ));
    }
    match &cfg.weights {
        WeightScheme::Uniform => uniform_row_weights(g),
        WeightScheme::FromFile => {
            let rows = file_weights
                .ok_or_else(|| Error::Config("weights `from_file` need a weighted edge-list graph source".into()))?;
            if !cfg.remove_edges.is_empty() {
                return Err(Error::Config("cannot remove edges from a graph with explicit weights".into()));
            }
            custom_row_weights(g, &rows)
        }
        WeightScheme::Explicit { rows } => custom_row_weights(g, rows),
    }
}

/// Sizes of `n` contiguous blocks covering `total` items; the first
/// `total % n` blocks get one extra item.
pub fn block_sizes(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

/// Agent owning each item under [`block_sizes`].
pub fn block_owner(total: usize, n: usize) -> Vec<usize> {
    block_sizes(total, n)
        .into_iter()
        .enumerate()
        .flat_map(|(i, k)| std::iter::repeat_n(i, k))
        .collect()
}

/// Output of [`generate_problem`].
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub problem: Problem,
    /// A point of the intersection (the feasibility witness).
    pub feasible_point: Vector,
    /// Upper bound on the curvature of the smooth part of `F`, if any.
    pub smoothness: Option<f64>,
    /// Owner of every sample, for logistic problems.
    pub sample_owner: Vec<usize>,
    /// Owner of every equality row.
    pub row_owner: Vec<usize>,
    /// Number of constraint blocks that had to be redrawn.
    pub redraws: usize,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // row-major draw order keeps the data independent of storage layout
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Per-agent equality blocks `A_i x = A_i x0`, redrawing any block without
/// full row rank from a fresh sub-seed.
fn equality_sets(rng: &mut ChaCha8Rng, data_seed: u64, n: usize, q: usize, dim: usize) -> Result<(Vec<ConstraintSet>, Vector, Vec<usize>, usize)> {
    let a = normal_matrix(rng, q, dim);
    let x0 = normal_vector(rng, dim);
    let sizes = block_sizes(q, n);
    let mut sets = Vec::with_capacity(n);
    let mut redraws = 0;
    let mut start = 0;
    for (i, &k) in sizes.iter().enumerate() {
        if k == 0 {
            sets.push(ConstraintSet::full_space(dim));
            continue;
        }
        let mut block = a.rows(start, k).into_owned();
        let mut attempt = 0;
        let set = loop {
            match ConstraintSet::affine(block.clone(), &block * &x0) {
                Ok(s) => break s,
                Err(Error::InvalidSet(msg)) if attempt < MAX_REDRAWS => {
                    attempt += 1;
                    redraws += 1;
                    log::warn!("agent {i}: equality block rejected ({msg}); redrawing");
                    let sub = data_seed ^ ((i as u64 + 1) << 32) ^ attempt;
                    block = normal_matrix(&mut ChaCha8Rng::seed_from_u64(sub), k, dim);
                }
                Err(e) => return Err(e),
            }
        };
        sets.push(set);
        start += k;
    }
    Ok((sets, x0, block_owner(q, n), redraws))
}

fn logistic_costs(features: &Matrix, labels: &[f64], owner: &[usize], n: usize, sigma: f64) -> Result<Vec<CostFunction>> {
    let m = features.ncols();
    let dim = m + 1;
    (0..n)
        .map(|i| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&s| owner[s] == i).collect();
            let reg = CostFunction::l1_norm(dim, sigma / n as f64, 0..m)?;
            if idx.is_empty() {
                return Ok(reg);
            }
            let p = Matrix::from_fn(idx.len(), m, |r, c| features[(idx[r], c)]);
            let l = idx.iter().map(|&s| labels[s]).collect();
            CostFunction::sum(vec![CostFunction::logistic(LogisticLoss::new(p, l, m)?)?, reg])
        })
        .collect()
}

/// `lambda_max(P_a^T P_a) / 4`, a bound on the logistic Hessian.
fn logistic_smoothness(features: &Matrix) -> f64 {
    let pa = features.clone().insert_column(features.ncols(), 1.0);
    let gram = pa.transpose() * &pa;
    gram.symmetric_eigenvalues().max() / 4.0
}

fn cost_from_spec(spec: &CostSpec, dim: usize) -> Result<CostFunction> {
    match spec {
        CostSpec::Affine { c, d } => {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
            }
            CostFunction::affine(Vector::from_column_slice(c), *d)
        }
        CostSpec::L1 { weight, lo, hi } => CostFunction::l1_norm(dim, *weight, *lo..*hi),
        CostSpec::Sum { terms } => CostFunction::sum(terms.iter().map(|t| cost_from_spec(t, dim)).collect::<Result<_>>()?),
    }
}

/// Builds per-agent costs and sets for `n` agents.
///
/// For the logistic problems the data are standard normal draws from the
/// data seed: features `P`, a ground-truth model `(u, v)` with labels
/// `sign(p^T u + v + noise)`, an equality matrix `A` and a point `x0` with
/// `b = A x0`, so the intersection contains `x0` by construction. Agent `i`
/// owns a contiguous block of samples and of equality rows, and carries the
/// regularizer `(sigma / n) ||u||_1`.
pub fn generate_problem(cfg: &ExperimentConfig, n: usize) -> Result<GeneratedProblem> {
    let r = cfg.regularity_r;
    match &cfg.problem {
        ProblemSpec::Logistic {
            samples,
            features,
            equality_rows,
            sigma,
            data_seed,
            label_noise,
        } => {
            let seed = data_seed.unwrap_or(cfg.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = normal_matrix(&mut rng, *samples, *features);
            let u_true = normal_vector(&mut rng, *features);
            let v_true: f64 = rng.sample(StandardNormal);
            let labels: Vec<f64> = (0..*samples)
                .map(|j| {
                    let noise: f64 = rng.sample(StandardNormal);
                    let score = p.row(j).transpose().dot(&u_true) + v_true + label_noise * noise;
                    if score >= 0.0 { 1.0 } else { -1.0 }
                })
                .collect();
            let owner = block_owner(*samples, n);
            let (sets, x0, row_owner, redraws) = equality_sets(&mut rng, seed, n, *equality_rows, features + 1)?;
            let costs = logistic_costs(&p, &labels, &owner, n, *sigma)?;
            let family = SetFamily::new(sets, r, Some(x0.clone()))?;
            Ok(GeneratedProblem {
                problem: Problem::new(costs, family)?,
                feasible_point: x0,
                smoothness: Some(logistic_smoothness(&p)),
                sample_owner: owner,
                row_owner,
                redraws,
            })
        }
        ProblemSpec::LogisticCsv {
            path,
            partition,
            equality_rows,
            sigma,
            data_seed,
        } => {
            let (p, labels) = load_training_csv(cfg.resolve_path(path))?;
            if *equality_rows > p.ncols() {
                return Err(Error::Config(format!(
                    "equality_rows = {equality_rows} exceeds the {} features",
                    p.ncols()
                )));
            }
            let owner = match partition {
                Some(f) => load_partition(cfg.resolve_path(f), labels.len(), n)?,
                None => block_owner(labels.len(), n),
            };
            let seed = data_seed.unwrap_or(cfg.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sets, x0, row_owner, redraws) = equality_sets(&mut rng, seed, n, *equality_rows, p.ncols() + 1)?;
            let costs = logistic_costs(&p, &labels, &owner, n, *sigma)?;
            let family = SetFamily::new(sets, r, Some(x0.clone()))?;
            Ok(GeneratedProblem {
                problem: Problem::new(costs, family)?,
                feasible_point: x0,
                smoothness: Some(logistic_smoothness(&p)),
                sample_owner: owner,
                row_owner,
                redraws,
            })
        }
        ProblemSpec::Explicit { dim, costs, sets, witness } => {
            if costs.len() != n {
                return Err(Error::Config(format!("{} agents but {} explicit costs", n, costs.len())));
            }
            let costs = costs.iter().map(|c| cost_from_spec(c, *dim)).collect::<Result<Vec<_>>>()?;
            let sets = sets
                .iter()
                .cloned()
                .map(ConstraintSet::try_from)
                .collect::<Result<Vec<_>>>()?;
            let family = SetFamily::new(sets, r, witness.as_ref().map(|w| Vector::from_column_slice(w)))?;
            let feasible_point = family.witness().clone();
            Ok(GeneratedProblem {
                problem: Problem::new(costs, family)?,
                feasible_point,
                smoothness: None,
                sample_owner: Vec::new(),
                row_owner: Vec::new(),
                redraws: 0,
            })
        }
    }
}
