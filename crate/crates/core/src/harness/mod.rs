//! Experiment configuration, seeded data generation, orchestration and
//! persistence of run directories.

pub mod config;
pub mod experiment;
pub mod problem;

pub use config::{CostSpec, ExperimentConfig, GraphSource, OracleSpec, ProblemSpec, ScheduleSpec, WeightScheme, SCHEMA_VERSION};
pub use experiment::{
    analyze_run_dir, prepare, run_algorithm, run_experiment, run_experiment_in_memory, solve_reference, spectral_analysis, validate_config,
    write_outputs, Analysis, ExperimentOutcome, ExperimentSummary, OracleReport, Setup, ValidationReport,
};
pub use problem::{block_owner, block_sizes, build_graph, build_weights, generate_problem, GeneratedProblem};
