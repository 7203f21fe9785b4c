//! Closed convex constraint sets with exact Euclidean projections.

use nalgebra::{Cholesky, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::{Matrix, Vector};

/// Relative singular-value cutoff for the rank checks.
const RANK_RTOL: f64 = 1e-10;
/// Residual a feasibility witness must reach.
pub const WITNESS_TOL: f64 = 1e-8;
const DYKSTRA_MAX_CYCLES: usize = 200_000;

/// `{x : A x = b}` with `A` of full row rank; the Cholesky factor of
/// `A A^T` is cached at construction.
#[derive(Debug, Clone)]
pub struct AffineSet {
    a: Matrix,
    b: Vector,
    gram: Cholesky<f64, Dyn>,
}

impl AffineSet {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidSet("affine set needs at least one row and column".into()));
        }
        check_dim(a.nrows(), b.len())?;
        if a.nrows() > a.ncols() {
            return Err(Error::InvalidSet(format!(
                "{} equality rows exceed dimension {}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if numerical_rank(&a) < a.nrows() {
            return Err(Error::InvalidSet("equality matrix is not of full row rank".into()));
        }
        let gram = Cholesky::new(&a * a.transpose())
            .ok_or_else(|| Error::InvalidSet("A A^T is not positive definite".into()))?;
        Ok(Self { a, b, gram })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    fn project(&self, x: &Vector) -> Vector {
        let r = &self.a * x - &self.b;
        x - self.a.tr_mul(&self.gram.solve(&r))
    }
}

fn numerical_rank(a: &Matrix) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * top).count()
}

#[derive(Debug, Clone)]
pub enum ConstraintSet {
    FullSpace { dim: usize },
    AffineEquality(AffineSet),
    /// `{x : a^T x <= c}`
    HalfSpace { normal: Vector, offset: f64 },
    /// Elementwise bounds; entries may be infinite.
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
}

impl ConstraintSet {
    pub fn full_space(dim: usize) -> Self {
        ConstraintSet::FullSpace { dim }
    }

    pub fn affine(a: Matrix, b: Vector) -> Result<Self> {
        AffineSet::new(a, b).map(ConstraintSet::AffineEquality)
    }

    pub fn half_space(normal: Vector, offset: f64) -> Result<Self> {
        if normal.norm() == 0.0 {
            return Err(Error::InvalidSet("half-space normal must be nonzero".into()));
        }
        if !offset.is_finite() {
            return Err(Error::NonFinite);
        }
        check_finite(&normal)?;
        Ok(ConstraintSet::HalfSpace { normal, offset })
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::InvalidSet("box requires lo <= hi elementwise".into()));
        }
        if lo.iter().any(|&l| l == f64::INFINITY) || hi.iter().any(|&h| h == f64::NEG_INFINITY) {
            return Err(Error::InvalidSet("box is empty".into()));
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidSet(format!("ball radius {radius} must be positive")));
        }
        check_finite(&center)?;
        Ok(ConstraintSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::FullSpace { dim } => *dim,
            ConstraintSet::AffineEquality(s) => s.a.ncols(),
            ConstraintSet::HalfSpace { normal, .. } => normal.len(),
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ConstraintSet::FullSpace { .. } => "full_space",
            ConstraintSet::AffineEquality(_) => "affine_equality",
            ConstraintSet::HalfSpace { .. } => "half_space",
            ConstraintSet::Box { .. } => "box",
            ConstraintSet::Ball { .. } => "ball",
        }
    }

    fn is_affine_or_full(&self) -> bool {
        matches!(self, ConstraintSet::FullSpace { .. } | ConstraintSet::AffineEquality(_))
    }

    /// Euclidean projection `argmin_{y in S} ||x - y||`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector) -> Vector {
        match self {
            ConstraintSet::FullSpace { .. } => x.clone(),
            ConstraintSet::AffineEquality(s) => s.project(x),
            ConstraintSet::HalfSpace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x - normal * (excess / normal.norm_squared())
                }
            }
            ConstraintSet::Box { lo, hi } => {
                Vector::from_fn(x.len(), |k, _| x[k].clamp(lo[k], hi[k]))
            }
            ConstraintSet::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + d * (*radius / norm)
                }
            }
        }
    }

    /// `||x - P(x)||`.
    pub fn distance(&self, x: &Vector) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol)
    }
}

/// Serialized form of a [`ConstraintSet`]; matrices are row-major nested arrays
/// and infinite box bounds are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum SetSpec {
    FullSpace { dim: usize },
    AffineEquality { a: Vec<Vec<f64>>, b: Vec<f64> },
    HalfSpace { a: Vec<f64>, c: f64 },
    Box { lo: Vec<Option<f64>>, hi: Vec<Option<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl TryFrom<SetSpec> for ConstraintSet {
    type Error = Error;

    fn try_from(spec: SetSpec) -> Result<Self> {
        let vec = |v: Vec<f64>| Vector::from_vec(v);
        match spec {
            SetSpec::FullSpace { dim } => Ok(ConstraintSet::full_space(dim)),
            SetSpec::AffineEquality { a, b } => {
                let cols = a.first().map_or(0, Vec::len);
                if a.iter().any(|r| r.len() != cols) {
                    return Err(Error::InvalidSet("ragged equality matrix".into()));
                }
                let m = Matrix::from_fn(a.len(), cols, |i, j| a[i][j]);
                ConstraintSet::affine(m, vec(b))
            }
            SetSpec::HalfSpace { a, c } => ConstraintSet::half_space(vec(a), c),
            SetSpec::Box { lo, hi } => ConstraintSet::boxed(
                lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect::<Vec<_>>().into(),
                hi.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect::<Vec<_>>().into(),
            ),
            SetSpec::Ball { center, radius } => ConstraintSet::ball(vec(center), radius),
        }
    }
}

impl From<&ConstraintSet> for SetSpec {
    fn from(s: &ConstraintSet) -> Self {
        let list = |v: &Vector| v.iter().copied().collect::<Vec<_>>();
        let finite = |v: &Vector| v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        match s {
            ConstraintSet::FullSpace { dim } => SetSpec::FullSpace { dim: *dim },
            ConstraintSet::AffineEquality(a) => SetSpec::AffineEquality {
                a: a.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
                b: list(&a.b),
            },
            ConstraintSet::HalfSpace { normal, offset } => SetSpec::HalfSpace {
                a: list(normal),
                c: *offset,
            },
            ConstraintSet::Box { lo, hi } => SetSpec::Box {
                lo: finite(lo),
                hi: finite(hi),
            },
            ConstraintSet::Ball { center, radius } => SetSpec::Ball {
                center: list(center),
                radius: *radius,
            },
        }
    }
}

/// Stacked equality system of an all-affine family, projected through the
/// pseudo-inverse so that duplicated rows across agents are harmless.
#[derive(Debug, Clone)]
struct StackedAffine {
    a: Matrix,
    b: Vector,
    pinv: Matrix,
}

impl StackedAffine {
    fn project(&self, x: &Vector) -> Vector {
        x - &self.pinv * (&self.a * x - &self.b)
    }
}

/// The agents' constraint sets `X_1..X_n` with a witness of `∩ X_i ≠ ∅`.
#[derive(Debug, Clone)]
pub struct SetFamily {
    sets: Vec<ConstraintSet>,
    regularity_r: f64,
    witness: Vector,
    stacked: Option<StackedAffine>,
}

impl SetFamily {
    /// Without a witness the family must consist of affine (or full-space)
    /// sets; the stacked least-squares solution then serves as witness.
    pub fn new(sets: Vec<ConstraintSet>, regularity_r: f64, witness: Option<Vector>) -> Result<Self> {
        let dim = sets
            .first()
            .ok_or_else(|| Error::InvalidSet("empty set family".into()))?
            .dim();
        if let Some(s) = sets.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
        if !(regularity_r >= 1.0) || !regularity_r.is_finite() {
            return Err(Error::InvalidSet(format!(
                "regularity constant {regularity_r} must be >= 1"
            )));
        }

        let stacked = if sets.iter().all(ConstraintSet::is_affine_or_full) {
            let rows: Vec<&AffineSet> = sets
                .iter()
                .filter_map(|s| match s {
                    ConstraintSet::AffineEquality(a) => Some(a),
                    _ => None,
                })
                .collect();
            if rows.is_empty() {
                None
            } else {
                let q: usize = rows.iter().map(|a| a.a.nrows()).sum();
                let mut a = Matrix::zeros(q, dim);
                let mut b = Vector::zeros(q);
                let mut r0 = 0;
                for s in rows {
                    let k = s.a.nrows();
                    a.view_mut((r0, 0), (k, dim)).copy_from(&s.a);
                    b.rows_mut(r0, k).copy_from(&s.b);
                    r0 += k;
                }
                let top = a.clone().svd(false, false).singular_values.max();
                let pinv = a
                    .clone()
                    .pseudo_inverse(RANK_RTOL * top)
                    .map_err(|e| Error::InvalidSet(e.to_string()))?;
                Some(StackedAffine { a, b, pinv })
            }
        } else {
            None
        };

        let witness = match (witness, &stacked) {
            (Some(w), _) => w,
            (None, Some(st)) => &st.pinv * &st.b,
            (None, None) if sets.iter().all(ConstraintSet::is_affine_or_full) => Vector::zeros(dim),
            (None, None) => {
                return Err(Error::Infeasible(
                    "a feasibility witness is required for non-affine families".into(),
                ))
            }
        };
        check_dim(dim, witness.len())?;
        for (i, s) in sets.iter().enumerate() {
            let d = s.distance(&witness)?;
            if !(d <= WITNESS_TOL) {
                return Err(Error::Infeasible(format!(
                    "witness is at distance {d:e} from set {i}"
                )));
            }
        }
        Ok(Self {
            sets,
            regularity_r,
            witness,
            stacked,
        })
    }

    pub fn sets(&self) -> &[ConstraintSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn regularity_r(&self) -> f64 {
        self.regularity_r
    }

    pub fn witness(&self) -> &Vector {
        &self.witness
    }

    /// True when the intersection projection is an affine map (closed form).
    pub fn is_affine(&self) -> bool {
        self.sets.iter().all(ConstraintSet::is_affine_or_full)
    }

    /// Projection onto `X = ∩ X_i`. A single proper set is projected onto
    /// directly, all-affine families in closed form, anything else by
    /// Dykstra's method.
    pub fn project_intersection(&self, x: &Vector, tol: f64) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        let mut proper = self
            .sets
            .iter()
            .filter(|s| !matches!(s, ConstraintSet::FullSpace { .. }));
        match (proper.next(), proper.next()) {
            (None, _) => return Ok(x.clone()),
            (Some(only), None) => return Ok(only.project_unchecked(x)),
            _ => {}
        }
        if let Some(st) = &self.stacked {
            return Ok(st.project(x));
        }
        dykstra(&self.sets, x, tol, DYKSTRA_MAX_CYCLES)
    }

    pub fn max_distance(&self, x: &Vector) -> Result<f64> {
        self.sets
            .iter()
            .try_fold(0.0_f64, |m, s| Ok(m.max(s.distance(x)?)))
    }

    /// Largest observed ratio `dist(x, X) / max_i dist(x, X_i)` over the
    /// sample points; a lower estimate of the regularity constant.
    pub fn sampled_regularity(&self, points: &[Vector], tol: f64) -> Result<f64> {
        let mut r: f64 = 1.0;
        for x in points {
            let local = self.max_distance(x)?;
            if local > 1e-12 {
                let global = (x - self.project_intersection(x, tol)?).norm();
                r = r.max(global / local);
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        let specs: Vec<SetSpec> = self.sets.iter().map(SetSpec::from).collect();
        Ok(serde_json::to_string_pretty(&specs)?)
    }

    pub fn from_json(text: &str, regularity_r: f64, witness: Option<Vector>) -> Result<Self> {
        let specs: Vec<SetSpec> = serde_json::from_str(text)?;
        let sets = specs
            .into_iter()
            .map(ConstraintSet::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(sets, regularity_r, witness)
    }
}

/// Dykstra's cyclic projection onto `∩ sets`, converging to the Euclidean
/// projection of `x`. Stops once a full cycle moves the iterate by less
/// than `tol` and every set is within `tol`.
pub fn dykstra(sets: &[ConstraintSet], x: &Vector, tol: f64, max_cycles: usize) -> Result<Vector> {
    for s in sets {
        check_dim(s.dim(), x.len())?;
    }
    let mut y = x.clone();
    let mut corrections = vec![Vector::zeros(x.len()); sets.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_cycles {
        let start = y.clone();
        for (s, p) in sets.iter().zip(corrections.iter_mut()) {
            let shifted = &y + &*p;
            y = s.project_unchecked(&shifted);
            *p = shifted - &y;
        }
        let moved = (&y - &start).norm();
        let worst = sets
            .iter()
            .map(|s| (&y - s.project_unchecked(&y)).norm())
            .fold(0.0, f64::max);
        residual = moved.max(worst);
        if residual < tol {
            return Ok(y);
        }
    }
    Err(Error::IntersectionCap {
        iterations: max_cycles,
        residual,
        best: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let aff = ConstraintSet::affine(Matrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[0.0])).unwrap();
        assert_eq!(aff.project(&v(&[3.0, 4.0])).unwrap(), v(&[0.0, 4.0]));

        let hs = ConstraintSet::half_space(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(hs.project(&v(&[0.5, 7.0])).unwrap(), v(&[0.5, 7.0]));

        let bx = ConstraintSet::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(bx.project(&v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));

        let ball = ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(ball.project(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn distance_examples() {
        let ball = ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(ball.distance(&v(&[2.0, 0.0])).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(ball.distance(&v(&[0.3, 0.4])).unwrap(), 0.0);

        // |Ax - b| / ||A|| for the hyperplane x1 + x2 = 2
        let aff = ConstraintSet::affine(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0])).unwrap();
        assert_abs_diff_eq!(
            aff.distance(&v(&[0.0, 0.0])).unwrap(),
            2.0_f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn infinite_box_bounds() {
        let bx = ConstraintSet::boxed(v(&[f64::NEG_INFINITY, 0.0]), v(&[1.0, f64::INFINITY])).unwrap();
        assert_eq!(bx.project(&v(&[-1e9, -3.0])).unwrap(), v(&[-1e9, 0.0]));
    }

    #[test]
    fn construction_errors() {
        assert!(ConstraintSet::half_space(v(&[0.0, 0.0]), 1.0).is_err());
        assert!(ConstraintSet::ball(v(&[0.0]), 0.0).is_err());
        assert!(ConstraintSet::boxed(v(&[1.0]), v(&[0.0])).is_err());
        let dependent = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(ConstraintSet::affine(dependent, v(&[1.0, 2.0])).is_err());
        let ball = ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert!(matches!(
            ball.project(&v(&[1.0])),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn family_requires_feasibility() {
        let h = |c: f64| {
            ConstraintSet::affine(Matrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[c])).unwrap()
        };
        // parallel hyperplanes x1 = 0 and x1 = 1
        assert!(matches!(
            SetFamily::new(vec![h(0.0), h(1.0)], 1.0, None),
            Err(Error::Infeasible(_))
        ));
        // duplicated rows are fine
        let fam = SetFamily::new(vec![h(1.0), h(1.0)], 1.0, None).unwrap();
        assert_abs_diff_eq!(fam.witness()[0], 1.0, epsilon = 1e-12);

        let ball = ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert!(SetFamily::new(vec![ball.clone()], 1.0, None).is_err());
        assert!(SetFamily::new(vec![ball.clone()], 1.0, Some(v(&[0.0, 0.0]))).is_ok());
        assert!(SetFamily::new(vec![ball.clone()], 1.0, Some(v(&[3.0, 0.0]))).is_err());
        assert!(SetFamily::new(vec![ball], 0.5, Some(v(&[0.0, 0.0]))).is_err());
    }

    #[test]
    fn intersection_examples() {
        let fam = SetFamily::new(vec![ConstraintSet::full_space(2); 3], 1.0, None).unwrap();
        assert_eq!(fam.project_intersection(&v(&[3.0, 4.0]), 1e-12).unwrap(), v(&[3.0, 4.0]));

        let e = |row: [f64; 2]| {
            ConstraintSet::affine(Matrix::from_row_slice(1, 2, &row), v(&[0.0])).unwrap()
        };
        let fam = SetFamily::new(vec![e([1.0, 0.0]), e([0.0, 1.0])], 1.0, None).unwrap();
        let p = fam.project_intersection(&v(&[3.0, 4.0]), 1e-12).unwrap();
        assert!(p.norm() < 1e-15);
    }

    #[test]
    fn dykstra_on_ball_and_halfspace() {
        // unit ball ∩ {x1 <= 0}: projection of (2, 0) is the origin
        let sets = vec![
            ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap(),
            ConstraintSet::half_space(v(&[1.0, 0.0]), 0.0).unwrap(),
        ];
        let fam = SetFamily::new(sets, 1.0, Some(v(&[0.0, 0.0]))).unwrap();
        let p = fam.project_intersection(&v(&[2.0, 0.0]), 1e-12).unwrap();
        assert!(p.norm() < 1e-10);
        // projection of (2, 2) is (0, 1)
        let p = fam.project_intersection(&v(&[2.0, 2.0]), 1e-12).unwrap();
        assert!((p - v(&[0.0, 1.0])).norm() < 1e-9);
    }

    #[test]
    fn dykstra_reports_cap() {
        let sets = vec![
            ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap(),
            ConstraintSet::ball(v(&[1.9, 0.0]), 1.0).unwrap(),
        ];
        match dykstra(&sets, &v(&[0.9, 5.0]), 1e-15, 2) {
            Err(Error::IntersectionCap { iterations, best, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 2);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_preserves_projections() {
        let sets = vec![
            ConstraintSet::affine(Matrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]), v(&[0.5])).unwrap(),
            ConstraintSet::half_space(v(&[0.0, 1.0, 0.0]), 3.0).unwrap(),
            ConstraintSet::boxed(v(&[f64::NEG_INFINITY, -5.0, -5.0]), v(&[5.0, 5.0, f64::INFINITY])).unwrap(),
            ConstraintSet::ball(v(&[0.0, 0.0, 0.0]), 10.0).unwrap(),
            ConstraintSet::full_space(3),
        ];
        let witness = sets[0].project(&v(&[0.0, 0.0, 0.0])).unwrap();
        let fam = SetFamily::new(sets, 2.0, Some(witness.clone())).unwrap();
        let text = fam.to_json().unwrap();
        assert!(text.contains("\"kind\": \"affine_equality\""));
        let back = SetFamily::from_json(&text, 2.0, Some(witness)).unwrap();
        let x = v(&[7.0, -9.0, 1.0]);
        for (a, b) in fam.sets().iter().zip(back.sets()) {
            assert_eq!(a.project(&x).unwrap(), b.project(&x).unwrap());
        }
    }

    #[test]
    fn sampled_regularity_of_identical_sets_is_one() {
        let s = ConstraintSet::affine(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[1.0])).unwrap();
        let fam = SetFamily::new(vec![s.clone(), s], 1.0, None).unwrap();
        let pts = [v(&[3.0, -1.0]), v(&[0.0, 0.0]), v(&[-2.0, 5.0])];
        assert_abs_diff_eq!(fam.sampled_regularity(&pts, 1e-12).unwrap(), 1.0, epsilon = 1e-12);
    }
}
