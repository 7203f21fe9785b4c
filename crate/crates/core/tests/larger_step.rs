//! The demo problem with the step size scaled by `n^-2` (and `n^-1` for the
//! unscaled baselines) instead of the default. Over 2e5 rounds the rescaled
//! method gets close to the optimum while the unscaled baselines stall at a
//! point biased towards the Perron-weighted objective.

use rsps_core::harness::{prepare, run_algorithm, solve_reference, ExperimentConfig, ScheduleSpec};
use rsps_core::{Algorithm, DiagnosticContext};

#[test]
fn larger_step_separates_rescaled_and_unscaled_methods() {
    let mut cfg = ExperimentConfig::demo();
    cfg.schedule = ScheduleSpec::PolynomialDecay { scale: 1.0, gamma: 0.8, n_power: -2 };
    cfg.dps_schedule = ScheduleSpec::PolynomialDecay { scale: 1.0, gamma: 0.8, n_power: -1 };
    cfg.log_every = 100;

    let setup = prepare(&cfg).unwrap();
    let oracle = solve_reference(&cfg, &setup).unwrap();
    let ctx = DiagnosticContext::new(setup.spectral.clone(), &setup.generated.problem, setup.initial.clone(), oracle.reference.clone()).unwrap();

    let alg1 = run_algorithm(&cfg, &setup, &ctx, Algorithm::Algorithm1).unwrap().summary(oracle.reference.f_star);
    let dps = run_algorithm(&cfg, &setup, &ctx, Algorithm::DpsA).unwrap().summary(oracle.reference.f_star);

    assert!(alg1.checks_passed, "{:?}", alg1.checks);
    assert!(alg1.final_accuracy <= 1e-2, "alg1 accuracy {}", alg1.final_accuracy);
    assert!(
        dps.final_accuracy >= 10.0 * alg1.final_accuracy,
        "dps {} vs alg1 {}",
        dps.final_accuracy,
        alg1.final_accuracy
    );
    // the baseline has stopped improving over the last decade of rounds
    let plateau = dps.accuracy_slope_last_decade.expect("enough logged rounds").slope;
    assert!(plateau > -0.05, "dps slope {plateau}");
}
