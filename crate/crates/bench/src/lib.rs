//! Fixtures shared by the benchmarks: a prepared network problem together
//! with a state that has already been advanced past the first rounds.

use rsps_core::harness::{prepare, ExperimentConfig, GraphSource, Setup};
use rsps_core::{step, Algorithm, NetworkState, Problem, Result, StepSchedule};

pub struct Fixture {
    pub setup: Setup,
    pub schedule: StepSchedule,
    pub state: NetworkState,
}

impl Fixture {
    /// The demo experiment, warmed up by `warm_rounds` rounds of Algorithm 1.
    pub fn demo(warm_rounds: usize) -> Result<Self> {
        Self::from_config(&ExperimentConfig::demo(), warm_rounds)
    }

    /// A ring-with-chords network on `n` nodes carrying the demo problem
    /// scaled so every agent owns ten samples.
    pub fn ring(n: usize, warm_rounds: usize) -> Result<Self> {
        let mut cfg = ExperimentConfig::demo();
        cfg.graph = GraphSource::RingWithChords { n, extra_edges: n / 2 };
        if let rsps_core::harness::ProblemSpec::Logistic { samples, .. } = &mut cfg.problem {
            *samples = 10 * n;
        }
        Self::from_config(&cfg, warm_rounds)
    }

    pub fn from_config(cfg: &ExperimentConfig, warm_rounds: usize) -> Result<Self> {
        let setup = prepare(cfg)?;
        let schedule = cfg.schedule_for(Algorithm::Algorithm1, setup.weights.n())?;
        let mut state = NetworkState::new(setup.initial.clone(), cfg.seed)?;
        for _ in 0..warm_rounds {
            state = step(&state, &setup.weights, &setup.generated.problem, &schedule, Algorithm::Algorithm1)?.into_state();
        }
        Ok(Self { setup, schedule, state })
    }

    pub fn problem(&self) -> &Problem {
        &self.setup.generated.problem
    }
}
