//! Convex costs with subgradient oracles and declared Lipschitz bounds.
//!
//! Only kinds whose subgradients stay bounded on unbounded regions are
//! offered (affine, weighted l1, logistic loss and their sums).

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::{Matrix, Vector};

const LIPSCHITZ_SPOT_CHECKS: usize = 100;

/// Logistic loss `sum_j ln(1 + exp(-l_j (p_j^T u + v)))` where `v` is the
/// coordinate at `intercept_index` and `u` collects the others in order.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    features: Matrix,
    labels: Vec<f64>,
    intercept_index: usize,
    /// `(p_j, 1)` laid out in the coordinates of `x`.
    augmented: Matrix,
}

impl LogisticLoss {
    pub fn new(features: Matrix, labels: Vec<f64>, intercept_index: usize) -> Result<Self> {
        check_dim(features.nrows(), labels.len())?;
        let dim = features.ncols() + 1;
        if intercept_index >= dim {
            return Err(Error::InvalidCost(format!(
                "intercept index {intercept_index} outside dimension {dim}"
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidCost(format!("label {l} not in {{-1, +1}}")));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let augmented = Matrix::from_fn(features.nrows(), dim, |j, k| match k.cmp(&intercept_index) {
            std::cmp::Ordering::Less => features[(j, k)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => features[(j, k - 1)],
        });
        Ok(Self {
            features,
            labels,
            intercept_index,
            augmented,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn intercept_index(&self) -> usize {
        self.intercept_index
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// Rows `(p_j, 1)` in the coordinates of `x`.
    pub fn augmented(&self) -> &Matrix {
        &self.augmented
    }

    /// `sum_j ||(p_j, 1)||`, a global bound on the gradient norm.
    pub fn gradient_bound(&self) -> f64 {
        self.augmented.row_iter().map(|r| r.norm()).sum()
    }

    fn value_and_gradient(&self, x: &Vector, grad: Option<&mut Vector>) -> f64 {
        let margins = &self.augmented * x;
        let mut value = 0.0;
        let mut weights = Vector::zeros(self.labels.len());
        for (j, (&z, &l)) in margins.iter().zip(&self.labels).enumerate() {
            let s = l * z;
            value += softplus(-s);
            // d/dz ln(1 + e^{-l z}) = -l / (1 + e^{l z})
            weights[j] = -l * sigmoid(-s);
        }
        if let Some(g) = grad {
            g.gemv_tr(1.0, &self.augmented, &weights, 1.0);
        }
        value
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub enum CostKind {
    /// `c^T x + d`
    Affine { c: Vector, d: f64 },
    /// `weight * sum_{k in coords} |x_k|`
    L1Norm { weight: f64, coords: Range<usize> },
    Logistic(LogisticLoss),
    Sum(Vec<CostFunction>),
}

#[derive(Debug, Clone)]
pub struct CostFunction {
    kind: CostKind,
    dim: usize,
    lipschitz: f64,
}

impl CostFunction {
    pub fn affine(c: Vector, d: f64) -> Result<Self> {
        check_finite(&c)?;
        let lipschitz = c.norm();
        Self::checked(CostKind::Affine { c: c.clone(), d }, c.len(), lipschitz)
    }

    /// The zero function on `R^dim`.
    pub fn zero(dim: usize) -> Self {
        Self::affine(Vector::zeros(dim), 0.0).expect("zero cost is valid")
    }

    pub fn l1_norm(dim: usize, weight: f64, coords: Range<usize>) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidCost(format!("l1 weight {weight} must be positive")));
        }
        if coords.end > dim || coords.start > coords.end {
            return Err(Error::InvalidCost(format!("l1 coordinates {coords:?} outside dimension {dim}")));
        }
        let lipschitz = weight * (coords.len() as f64).sqrt();
        Self::checked(CostKind::L1Norm { weight, coords }, dim, lipschitz)
    }

    pub fn logistic(loss: LogisticLoss) -> Result<Self> {
        let dim = loss.augmented.ncols();
        let lipschitz = loss.gradient_bound();
        Self::checked(CostKind::Logistic(loss), dim, lipschitz)
    }

    pub fn sum(terms: Vec<CostFunction>) -> Result<Self> {
        let dim = terms
            .first()
            .ok_or_else(|| Error::InvalidCost("empty sum".into()))?
            .dim;
        for t in &terms {
            check_dim(dim, t.dim)?;
        }
        let lipschitz = terms.iter().map(|t| t.lipschitz).sum();
        Ok(Self {
            kind: CostKind::Sum(terms),
            dim,
            lipschitz,
        })
    }

    /// Replaces the declared bound after spot-checking it.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        self.lipschitz = lipschitz;
        self.spot_check_lipschitz()?;
        Ok(self)
    }

    fn checked(kind: CostKind, dim: usize, lipschitz: f64) -> Result<Self> {
        let f = Self { kind, dim, lipschitz };
        f.spot_check_lipschitz()?;
        Ok(f)
    }

    /// Samples points at several scales and confirms `||g|| <= L`.
    fn spot_check_lipschitz(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x11f5_c3e0);
        for k in 0..LIPSCHITZ_SPOT_CHECKS {
            let scale = 10f64.powi(k as i32 % 5 - 2);
            let x = Vector::from_fn(self.dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let g = self.subgradient(&x)?;
            if g.norm() > self.lipschitz * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::InvalidCost(format!(
                    "declared Lipschitz bound {} below subgradient norm {}",
                    self.lipschitz,
                    g.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared bound on the subgradient norm over the working region.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_finite(x)?;
        Ok(self.eval(x, None))
    }

    /// An element of `∂f(x)`; the l1 part uses `sign(0) = 0`.
    pub fn subgradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        check_finite(x)?;
        let mut g = Vector::zeros(self.dim);
        self.eval(x, Some(&mut g));
        Ok(g)
    }

    pub fn value_and_subgradient(&self, x: &Vector) -> Result<(f64, Vector)> {
        check_dim(self.dim, x.len())?;
        check_finite(x)?;
        let mut g = Vector::zeros(self.dim);
        let v = self.eval(x, Some(&mut g));
        Ok((v, g))
    }

    /// Returns `f(x)` and, when requested, accumulates a subgradient into `grad`.
    fn eval(&self, x: &Vector, mut grad: Option<&mut Vector>) -> f64 {
        match &self.kind {
            CostKind::Affine { c, d } => {
                if let Some(g) = grad {
                    *g += c;
                }
                c.dot(x) + d
            }
            CostKind::L1Norm { weight, coords } => {
                let mut s = 0.0;
                for k in coords.clone() {
                    s += x[k].abs();
                    if let Some(g) = grad.as_deref_mut() {
                        g[k] += weight * sign(x[k]);
                    }
                }
                weight * s
            }
            CostKind::Logistic(loss) => loss.value_and_gradient(x, grad),
            CostKind::Sum(terms) => terms
                .iter()
                .map(|t| t.eval(x, grad.as_deref_mut()))
                .sum(),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Checks `f(y) - f(x) >= g^T (y - x) - 1e-9` at `trials` random `y`
/// spread over several distances from `x`.
pub fn subdifferential_check(f: &CostFunction, x: &Vector, trials: usize, seed: u64) -> Result<bool> {
    let (fx, g) = f.value_and_subgradient(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..trials {
        let scale = 10f64.powi(k as i32 % 7 - 4);
        let y = Vector::from_fn(x.len(), |i, _| x[i] + scale * rng.sample::<f64, _>(StandardNormal));
        let fy = f.value(&y)?;
        if fy - fx < g.dot(&(&y - x)) - 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reads training data: one row per sample, features then a `{-1, +1}` label.
/// Lines starting with a non-numeric field are treated as a header.
pub fn load_training_csv(path: impl AsRef<Path>) -> Result<(Matrix, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("training row {line}: {e}"))),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse("training CSV needs rows of equal width >= 2".into()));
    }
    let features = Matrix::from_fn(rows.len(), width - 1, |i, j| rows[i][j]);
    let labels = rows.iter().map(|r| r[width - 1]).collect();
    Ok((features, labels))
}

/// Reads `sample,agent` pairs and returns the agent of every sample.
pub fn load_partition(path: impl AsRef<Path>, samples: usize, agents: usize) -> Result<Vec<usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut owner = vec![None; samples];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<usize>, _> = rec.iter().map(str::parse::<usize>).collect();
        let vals = match parsed {
            Ok(v) if v.len() == 2 => v,
            Err(_) if line == 0 => continue,
            _ => return Err(Error::Parse(format!("partition line {line}: expected `sample,agent`"))),
        };
        let (s, a) = (vals[0], vals[1]);
        if s >= samples || a >= agents {
            return Err(Error::Parse(format!("partition entry ({s}, {a}) out of range")));
        }
        if owner[s].replace(a).is_some() {
            return Err(Error::Parse(format!("sample {s} assigned twice")));
        }
    }
    owner
        .into_iter()
        .enumerate()
        .map(|(s, a)| a.ok_or_else(|| Error::Parse(format!("sample {s} unassigned"))))
        .collect()
}
