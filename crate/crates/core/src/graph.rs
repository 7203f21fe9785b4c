//! Directed communication graphs, row-stochastic weights and their spectral data.
//!
//! Edge `(i, j)` means node `i` receives from node `j`, so row `i` of the
//! weight matrix is chosen by agent `i` alone.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Row sums must match 1 to this absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Gaps `|[W^t]_ji - pi_i|` below this are indistinguishable from rounding
/// noise in double precision and are not used to fit `C`.
pub const GAP_NOISE_FLOOR: f64 = 1e-13;

const PERRON_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    /// Builds a graph and adds the self-loop `(i, i)` for every node.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::from_raw_edges(n, edges)?;
        g.edges.extend((0..n).map(|i| (i, i)));
        Ok(g)
    }

    /// Builds a graph with exactly the given edges (no implicit self-loops).
    pub fn from_raw_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let edges: BTreeSet<_> = edges.into_iter().collect();
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(Error::InvalidGraph(format!(
                "edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.has_edge(i, i))
    }

    /// In-neighbourhood `N_i` of node `i`, itself included when the self-loop exists.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .range((i, 0)..(i + 1, 0))
            .map(|&(_, j)| j)
            .collect()
    }

    /// Copy of the graph with edge `(i, j)` deleted. Self-loops cannot be removed.
    pub fn without_edge(&self, i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidGraph(format!("cannot remove self-loop ({i}, {i})")));
        }
        if !self.has_edge(i, j) {
            return Err(Error::InvalidGraph(format!("edge ({i}, {j}) not present")));
        }
        let mut g = self.clone();
        g.edges.remove(&(i, j));
        Ok(g)
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self)
    }

    /// Parses the plain-text edge-list format: first line `n`, then one
    /// `i j` pair per line. A third column gives the weight `w_ij`; if any
    /// line carries a weight, every edge (self-loops included) must, and the
    /// weights are returned as rows.
    pub fn parse_edge_list(text: &str) -> Result<(Self, Option<Vec<Vec<f64>>>)> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("node count: {e}")))?;
        let mut edges = Vec::new();
        let mut weights = BTreeMap::new();
        let mut unweighted = 0usize;
        for line in lines {
            let cols: Vec<&str> = line.split_whitespace().collect();
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line `{line}`: {e}")))
            };
            match cols.as_slice() {
                [i, j] => {
                    edges.push((idx(i)?, idx(j)?));
                    unweighted += 1;
                }
                [i, j, w] => {
                    let (i, j) = (idx(i)?, idx(j)?);
                    let w: f64 = w
                        .parse()
                        .map_err(|e| Error::Parse(format!("line `{line}`: {e}")))?;
                    edges.push((i, j));
                    weights.insert((i, j), w);
                }
                _ => return Err(Error::Parse(format!("malformed line `{line}`"))),
            }
        }
        if weights.is_empty() {
            return Ok((Self::new(n, edges)?, None));
        }
        if unweighted > 0 {
            return Err(Error::Parse(
                "weighted edge list must give a weight on every line".into(),
            ));
        }
        let g = Self::from_raw_edges(n, edges)?;
        let mut rows = vec![vec![0.0; n]; n];
        for ((i, j), w) in weights {
            rows[i][j] = w;
        }
        Ok((g, Some(rows)))
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(Self, Option<Vec<Vec<f64>>>)> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the edge-list format, omitting the implicit self-loops.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (i, j) in self.edges().filter(|(i, j)| i != j) {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Named 6-node demo network: the directed ring `k -> k+1` plus the
    /// chords `2 -> 1`, `0 -> 3` and `1 -> 5`. Its uniform-weight matrix
    /// has a non-uniform Perron vector (`pi_max / pi_min = 3`).
    pub fn demo6() -> Self {
        let mut edges: Vec<(usize, usize)> = (0..6).map(|k| ((k + 1) % 6, k)).collect();
        edges.extend([(1, 2), (3, 0), (5, 1)]);
        Self::new(6, edges).expect("demo graph is valid")
    }

    /// The demo edge whose removal keeps strong connectivity but shrinks the
    /// spectral gap (node 1 stops listening to node 2).
    pub const DEMO6_REMOVABLE_EDGE: (usize, usize) = (1, 2);

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))))
    }

    /// Directed ring `k -> k+1` with `extra_edges` chords added in a fixed
    /// order (shortest backward jumps first, spread over the nodes).
    pub fn ring_with_chords(n: usize, extra_edges: usize) -> Result<Self> {
        let mut edges: BTreeSet<(usize, usize)> = (0..n).map(|k| ((k + 1) % n, k)).collect();
        let mut added = 0;
        'outer: for d in 2..n {
            for k in 0..n {
                if added == extra_edges {
                    break 'outer;
                }
                // spread receivers: stride 2 through the nodes, then the rest
                let i = (2 * k + k / n.div_ceil(2)) % n;
                let e = (i, (i + n - d) % n);
                if e.0 != e.1 && edges.insert(e) {
                    added += 1;
                }
            }
        }
        if added < extra_edges {
            return Err(Error::InvalidGraph(format!(
                "ring on {n} nodes admits only {added} chords"
            )));
        }
        Self::new(n, edges)
    }

    /// Random ring over a shuffled node order (guaranteeing strong
    /// connectivity) plus each remaining ordered pair with probability `p`.
    pub fn random_strongly_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidGraph(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        let mut edges: BTreeSet<_> = (0..n).map(|k| (order[(k + 1) % n], order[k])).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    edges.insert((i, j));
                }
            }
        }
        Self::new(n, edges)
    }
}

/// Forward and reverse reachability from node 0 both cover every node.
pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    let n = g.n();
    let mut forward = vec![Vec::new(); n];
    let mut reverse = vec![Vec::new(); n];
    for (i, j) in g.edges() {
        // information flows j -> i
        forward[j].push(i);
        reverse[i].push(j);
    }
    let covers = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    covers(&forward) && covers(&reverse)
}

/// Dense row-stochastic mixing matrix whose sparsity matches its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Matrix,
}

impl WeightMatrix {
    /// Validates `w` against `g`: nonnegative, rows summing to one,
    /// positive exactly on the edges (self-loops included).
    pub fn from_matrix(g: &DirectedGraph, w: Matrix) -> Result<Self> {
        let n = g.n();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::InvalidWeights(format!(
                "expected {n}x{n} matrix, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..n {
            if !(w[(i, i)] > 0.0) {
                return Err(Error::InvalidWeights(format!("zero self-weight w[{i}][{i}]")));
            }
            let mut sum = 0.0;
            for j in 0..n {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidWeights(format!("w[{i}][{j}] = {v} is not a valid weight")));
                }
                match (g.has_edge(i, j), v > 0.0) {
                    (true, false) => {
                        return Err(Error::InvalidWeights(format!("edge ({i}, {j}) has zero weight")))
                    }
                    (false, true) => {
                        return Err(Error::InvalidWeights(format!(
                            "nonzero weight {v} on non-edge ({i}, {j})"
                        )))
                    }
                    _ => {}
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidWeights(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { w })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// `W^t` by repeated multiplication.
    pub fn power(&self, t: usize) -> Matrix {
        let mut p = Matrix::identity(self.n(), self.n());
        for _ in 0..t {
            p = &self.w * p;
        }
        p
    }
}

/// `w_ij = 1 / |N_i|` on the in-neighbourhood (self included).
pub fn uniform_row_weights(g: &DirectedGraph) -> Result<WeightMatrix> {
    if let Some(i) = (0..g.n()).find(|&i| !g.has_edge(i, i)) {
        return Err(Error::InvalidWeights(format!("node {i} lacks a self-loop")));
    }
    let n = g.n();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        let nbrs = g.in_neighbors(i);
        let share = 1.0 / nbrs.len() as f64;
        for j in nbrs {
            w[(i, j)] = share;
        }
    }
    WeightMatrix::from_matrix(g, w)
}

/// Weights chosen row by row by each receiving agent.
pub fn custom_row_weights(g: &DirectedGraph, rows: &[Vec<f64>]) -> Result<WeightMatrix> {
    let n = g.n();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidWeights(format!("expected {n} rows of length {n}")));
    }
    WeightMatrix::from_matrix(g, Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Normalized left Perron eigenvector by power iteration `v^T <- v^T W`
/// from the uniform vector.
pub fn perron_left_eigenvector(w: &WeightMatrix, tol: f64) -> Result<Vector> {
    perron_left_eigenvector_capped(w, tol, PERRON_MAX_ITER)
}

pub fn perron_left_eigenvector_capped(w: &WeightMatrix, tol: f64, max_iter: usize) -> Result<Vector> {
    let n = w.n();
    let wt = w.matrix().transpose();
    let mut v = Vector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = &wt * &v;
        let s = next.sum();
        next /= s;
        residual = (&next - &v).amax();
        v = next;
        if residual < tol {
            if v.iter().any(|&p| p <= 0.0) {
                return Err(Error::InvalidSpectral(
                    "Perron vector has a nonpositive entry; W is reducible".into(),
                ));
            }
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        what: "Perron power iteration",
        iterations: max_iter,
        residual,
    })
}

/// Spectral quantities of `W` that control the eigenvector estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub pi: Vec<f64>,
    pub lambda2_mod: f64,
    /// Contraction rate in `(lambda2_mod, 1)`.
    pub lambda: f64,
    /// Decay constant: `|[W^t]_ji - pi_i| <= c * lambda^t`.
    pub c: f64,
    /// `1 / eta <= z_ii(t) <= 1` for all t.
    pub eta: f64,
    pub horizon: usize,
    /// Last round at which some `z_ii(t) < pi_i / 2`.
    pub t0: usize,
}

impl SpectralData {
    pub fn pi_vector(&self) -> Vector {
        Vector::from_column_slice(&self.pi)
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn pi_max(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    /// The certified envelope `c * lambda^t`.
    pub fn envelope(&self, t: usize) -> f64 {
        self.c * self.lambda.powi(t as i32)
    }

    /// Computes everything with the default horizon.
    pub fn analyze(w: &WeightMatrix) -> Result<Self> {
        let l2 = second_eigenvalue_modulus(w);
        estimate_decay_constants(w, default_horizon(w.n(), l2))
    }
}

/// `10 n ceil(1 / (1 - |lambda_2|))`.
pub fn default_horizon(n: usize, lambda2_mod: f64) -> usize {
    let gap = (1.0 - lambda2_mod).max(1e-12);
    10 * n * (1.0 / gap).ceil() as usize
}

/// Modulus of the second-largest eigenvalue of `W` (dense eigen-solve).
pub fn second_eigenvalue_modulus(w: &WeightMatrix) -> f64 {
    if w.n() == 1 {
        return 0.0;
    }
    let eig = w.matrix().clone().complex_eigenvalues();
    let mut moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    // drop the Perron root, i.e. the eigenvalue closest to 1
    let perron = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    moduli.remove(perron);
    moduli.into_iter().fold(0.0, f64::max).min(1.0)
}

/// Fits `(C, lambda)` of the geometric bound on `W^t - 1 pi^T` and the
/// lower bound `1/eta` on the diagonal estimates `z_ii(t) = [W^t]_ii`.
///
/// `lambda = (|lambda_2| + 1) / 2`; `C` is the largest ratio
/// `|[W^t]_ji - pi_i| / lambda^t` over `t <= horizon`, restricted to gaps
/// above [`GAP_NOISE_FLOOR`]. The ratio must already be past its peak in the
/// second half of the fitted range, otherwise the horizon is too short.
#[allow(clippy::needless_range_loop)]
pub fn estimate_decay_constants(w: &WeightMatrix, horizon: usize) -> Result<SpectralData> {
    if horizon == 0 {
        return Err(Error::HorizonTooSmall {
            horizon,
            reason: "horizon must be at least 1".into(),
        });
    }
    let n = w.n();
    let pi = perron_left_eigenvector(w, 1e-15)?;
    let lambda2_mod = second_eigenvalue_modulus(w);
    let lambda = 0.5 * (lambda2_mod + 1.0);

    let mut power = Matrix::identity(n, n);
    let mut ratios = Vec::with_capacity(horizon + 1);
    let mut diag_min_before = vec![f64::INFINITY; horizon + 1];
    let mut last_violation: Option<usize> = None;
    let mut lambda_t = 1.0;
    for t in 0..=horizon {
        let mut gap: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                gap = gap.max((power[(j, i)] - pi[i]).abs());
            }
        }
        if gap >= GAP_NOISE_FLOOR || t == 0 {
            ratios.push(gap / lambda_t);
        }
        let mut dmin = f64::INFINITY;
        for i in 0..n {
            let z = power[(i, i)];
            dmin = dmin.min(z);
            if z < pi[i] / 2.0 {
                last_violation = Some(t);
            }
        }
        diag_min_before[t] = dmin;
        power = w.matrix() * power;
        lambda_t *= lambda;
    }

    let c = ratios.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let fitted = ratios.len() - 1;
    if fitted >= 2 {
        let tail_max = ratios[fitted / 2 + 1..].iter().copied().fold(0.0, f64::max);
        if tail_max >= c && ratios[fitted] >= ratios[fitted / 2] {
            return Err(Error::HorizonTooSmall {
                horizon,
                reason: "decay ratio still increasing at the horizon".into(),
            });
        }
    }

    if last_violation == Some(horizon) {
        return Err(Error::HorizonTooSmall {
            horizon,
            reason: "z_ii(t) has not settled above pi_i / 2".into(),
        });
    }
    let t0 = last_violation.unwrap_or(0);
    let pi_half_min = pi.min() / 2.0;
    if c * lambda.powi(horizon as i32) > pi_half_min {
        return Err(Error::HorizonTooSmall {
            horizon,
            reason: "C lambda^horizon exceeds pi_min / 2; tail bound for z_ii not certified".into(),
        });
    }
    let diag_min = diag_min_before[..=t0].iter().copied().fold(f64::INFINITY, f64::min);
    let eta_inv = diag_min.min(pi_half_min);

    Ok(SpectralData {
        pi: pi.iter().copied().collect(),
        lambda2_mod,
        lambda,
        c,
        eta: 1.0 / eta_inv,
        horizon,
        t0,
    })
}
