//! Randomized invariants of projections, costs, weight matrices and the
//! network dynamics.

use proptest::prelude::*;

use rsps_core::objectives::LogisticLoss;
use rsps_core::{
    perron_left_eigenvector, run, step, uniform_row_weights, Algorithm, ConstraintSet, CostFunction, DiagnosticContext, DirectedGraph,
    LogOptions, Matrix, NetworkState, Problem, Reference, SetFamily, StepSchedule, Vector,
};

const DIM: usize = 4;

fn vec_strategy(dim: usize, scale: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-scale..scale, dim).prop_map(Vector::from_vec)
}

fn set_strategy() -> impl Strategy<Value = ConstraintSet> {
    prop_oneof![
        (prop::collection::vec(-2.0..2.0f64, 2 * DIM), vec_strategy(2, 3.0))
            .prop_filter_map("rank-deficient", |(a, b)| ConstraintSet::affine(Matrix::from_row_slice(2, DIM, &a), b).ok()),
        (vec_strategy(DIM, 2.0), -3.0..3.0f64)
            .prop_filter_map("zero normal", |(n, c)| ConstraintSet::half_space(n, c).ok()),
        (vec_strategy(DIM, 3.0), prop::collection::vec(0.0..2.0f64, DIM)).prop_map(|(lo, w)| {
            let hi = &lo + Vector::from_vec(w);
            ConstraintSet::boxed(lo, hi).unwrap()
        }),
        (vec_strategy(DIM, 3.0), 0.1..4.0f64).prop_map(|(c, r)| ConstraintSet::ball(c, r).unwrap()),
    ]
}

/// A strongly connected digraph: a directed ring plus random chords.
fn graph_strategy() -> impl Strategy<Value = DirectedGraph> {
    (2usize..8).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |chords| {
            let ring = (0..n).map(|k| ((k + 1) % n, k));
            DirectedGraph::new(n, ring.chain(chords)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_nonexpansive(set in set_strategy(), x in vec_strategy(DIM, 10.0), y in vec_strategy(DIM, 10.0)) {
        let px = set.project(&x).unwrap();
        let py = set.project(&y).unwrap();
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(set in set_strategy(), x in vec_strategy(DIM, 10.0)) {
        let px = set.project(&x).unwrap();
        prop_assert!(set.contains(&px, 1e-9).unwrap());
        let ppx = set.project(&px).unwrap();
        prop_assert!((&ppx - &px).norm() <= 1e-9 * (1.0 + px.norm()));
        prop_assert!((set.distance(&x).unwrap() - (&x - &px).norm()).abs() <= 1e-9);
    }

    /// `|P(x) - y|^2 <= |x - y|^2 - |P(x) - x|^2` for every `y` in the set.
    #[test]
    fn projection_pythagorean_inequality(set in set_strategy(), x in vec_strategy(DIM, 10.0), v in vec_strategy(DIM, 10.0)) {
        let y = set.project(&v).unwrap();
        let px = set.project(&x).unwrap();
        let lhs = (&px - &y).norm_squared();
        let rhs = (&x - &y).norm_squared() - (&px - &x).norm_squared();
        prop_assert!(lhs <= rhs + 1e-8 * (1.0 + (&x - &y).norm_squared()));
    }

    #[test]
    fn cost_subgradients_support_and_are_bounded(
        c in vec_strategy(DIM, 3.0),
        weight in 0.01..3.0f64,
        feats in prop::collection::vec(-2.0..2.0f64, 5 * (DIM - 1)),
        labels in prop::collection::vec(prop::bool::ANY, 5),
        x in vec_strategy(DIM, 5.0),
        y in vec_strategy(DIM, 5.0),
    ) {
        let labels: Vec<f64> = labels.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect();
        let logistic = LogisticLoss::new(Matrix::from_row_slice(5, DIM - 1, &feats), labels, DIM - 1).unwrap();
        let costs = [
            CostFunction::affine(c, 0.5).unwrap(),
            CostFunction::l1_norm(DIM, weight, 0..DIM - 1).unwrap(),
            CostFunction::logistic(logistic).unwrap(),
        ];
        for f in costs {
            let (fx, g) = f.value_and_subgradient(&x).unwrap();
            let fy = f.value(&y).unwrap();
            prop_assert!(fy >= fx + g.dot(&(&y - &x)) - 1e-9 * (1.0 + fx.abs()));
            prop_assert!(g.norm() <= f.lipschitz() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn uniform_weights_have_a_left_perron_vector(g in graph_strategy()) {
        let w = uniform_row_weights(&g).unwrap();
        let m = w.matrix();
        for i in 0..g.n() {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(m[(i, i)] > 0.0);
        }
        let pi = perron_left_eigenvector(&w, 1e-13).unwrap();
        prop_assert!((pi.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(pi.iter().all(|&p| p > 0.0));
        let fixed = m.transpose() * &pi;
        prop_assert!((fixed - &pi).norm() <= 1e-10);
    }

    /// The Perron estimates stay on the probability simplex and the iterates
    /// stay inside each agent's own set, whatever the graph.
    #[test]
    fn rescaled_rounds_keep_estimates_stochastic_and_iterates_feasible(
        g in graph_strategy(),
        centre in vec_strategy(DIM, 2.0),
        x0 in vec_strategy(DIM, 5.0),
        rounds in 1usize..40,
        alg in prop_oneof![Just(Algorithm::Algorithm1), Just(Algorithm::Algorithm2)],
    ) {
        let n = g.n();
        let w = uniform_row_weights(&g).unwrap();
        let sets: Vec<ConstraintSet> = (0..n)
            .map(|i| ConstraintSet::ball(&centre + Vector::from_element(DIM, 0.05 * i as f64), 1.0).unwrap())
            .collect();
        let family = SetFamily::new(sets, 1.0, Some(centre.clone())).unwrap();
        let costs: Vec<CostFunction> = (0..n)
            .map(|i| CostFunction::affine(Vector::from_fn(DIM, |k, _| ((i + k) as f64).cos()), 0.0).unwrap())
            .collect();
        let problem = Problem::new(costs, family).unwrap();
        let sched = StepSchedule::polynomial_decay(0.3, 0.7).unwrap();
        let mut ns = NetworkState::new(vec![x0; n], 0).unwrap();
        for _ in 0..rounds {
            ns = step(&ns, &w, &problem, &sched, alg).unwrap().into_state();
            for (i, a) in ns.agents.iter().enumerate() {
                prop_assert!(a.z.iter().all(|&v| v >= 0.0));
                prop_assert!((a.z.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(a.z_self() > 0.0);
                prop_assert!(problem.family.sets()[i].contains(&a.x, 1e-9).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_deterministic(g in graph_strategy(), rounds in 1usize..60) {
        let n = g.n();
        let w = uniform_row_weights(&g).unwrap();
        let family = SetFamily::new(vec![ConstraintSet::full_space(2); n], 1.0, None).unwrap();
        let costs: Vec<CostFunction> = (0..n)
            .map(|i| CostFunction::l1_norm(2, 1.0 + i as f64, 0..2).unwrap())
            .collect();
        let problem = Problem::new(costs, family).unwrap();
        let sched = StepSchedule::polynomial_decay(0.1, 0.6).unwrap();
        let initial: Vec<Vector> = (0..n).map(|i| Vector::from_vec(vec![i as f64, 1.0])).collect();
        let ctx = DiagnosticContext::prepare(&w, &problem, initial.clone(), Reference::new(Vector::zeros(2), 0.0)).unwrap();
        let opts = LogOptions { log_every: 3, snapshot_every: 0 };
        let a = run(NetworkState::new(initial.clone(), 9).unwrap(), &w, &problem, &sched, Algorithm::Algorithm1, rounds, &opts, &ctx).unwrap();
        let b = run(NetworkState::new(initial, 9).unwrap(), &w, &problem, &sched, Algorithm::Algorithm1, rounds, &opts, &ctx).unwrap();
        prop_assert_eq!(&a.final_state, &b.final_state);
        let dir = tempfile::tempdir().unwrap();
        a.write_csv(dir.path().join("a.csv")).unwrap();
        b.write_csv(dir.path().join("b.csv")).unwrap();
        let ca = std::fs::read(dir.path().join("a.csv")).unwrap();
        let cb = std::fs::read(dir.path().join("b.csv")).unwrap();
        prop_assert_eq!(ca, cb);
    }
}
