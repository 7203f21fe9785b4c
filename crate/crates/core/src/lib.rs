//! Distributed constrained convex optimization over fixed, strongly
//! connected directed networks that only admit row-stochastic mixing.
//!
//! Each agent `i` holds a private convex cost `f_i` and a closed convex set
//! `X_i`, and the network minimizes `F = sum_i f_i` over `X = ∩ X_i`. The
//! row-stochastic weights bias plain consensus towards the left Perron
//! vector `pi` of `W`; the two rescaled projected-subgradient methods in
//! [`dynamics`] undo that bias by dividing each local subgradient by an
//! in-network estimate `z_ii(t)` of `pi_i`.
//!
//! Modules:
//! - [`graph`]: digraphs, weight matrices, Perron vector and decay constants.
//! - [`sets`]: constraint sets with exact projections, Dykstra's method.
//! - [`objectives`]: convex costs with subgradient oracles.
//! - [`dynamics`]: the synchronous round updates and the centralized oracle.
//! - [`diagnostics`]: per-round metrics, rate constants and bound checks.
//! - [`harness`]: experiment configuration, data generation and persistence.

// Validation writes `!(x > 0.0)` so that NaN is rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod objectives;
pub mod sets;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use diagnostics::{
    compute_rate_constants, fit_decay_order, fit_geometric_rate, rate_bound_e, BoundChecks,
    CheckTally, DecayFit, DiagnosticContext, RateConstants, RateInputs, Reference, RoundRecord,
    RunLog, RunSummary,
};
pub use dynamics::{
    centralized_projected_subgradient, run, step, step_algorithm1, step_algorithm2, step_dps,
    AgentState, Algorithm, CentralizedIter, DpsVariant, LogOptions, NetworkState, Problem, RoundOutput,
    StepSchedule,
};
pub use error::{Error, Result};
pub use harness::ExperimentConfig;
pub use graph::{
    custom_row_weights, estimate_decay_constants, is_strongly_connected, perron_left_eigenvector,
    uniform_row_weights, DirectedGraph, SpectralData, WeightMatrix,
};
pub use objectives::CostFunction;
pub use sets::{ConstraintSet, SetFamily};
