//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Algorithm, StepSchedule};
use crate::error::{Error, Result};
use crate::sets::SetSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// The shipped 6-node digraph with nonuniform Perron vector.
    Demo6,
    /// Edge-list file; relative paths resolve against the config file.
    File { path: PathBuf },
    RingWithChords { n: usize, extra_edges: usize },
    Complete { n: usize },
    RandomStronglyConnected {
        n: usize,
        p: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_ij = 1 / |N_i|`.
    #[default]
    Uniform,
    /// Weights from the third column of the edge-list file.
    FromFile,
    /// Dense rows, one per agent.
    Explicit { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Affine { c: Vec<f64>, #[serde(default)] d: f64 },
    /// `weight * sum_{k in lo..hi} |x_k|`
    L1 { weight: f64, lo: usize, hi: usize },
    Sum { terms: Vec<CostSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Seeded l1-regularized logistic regression with equality constraints.
    Logistic {
        samples: usize,
        features: usize,
        equality_rows: usize,
        sigma: f64,
        #[serde(default)]
        data_seed: Option<u64>,
        #[serde(default = "default_label_noise")]
        label_noise: f64,
    },
    /// Logistic regression on a `features..., label` CSV, optionally with a
    /// `sample,agent` partition file; equality constraints are generated.
    LogisticCsv {
        path: PathBuf,
        #[serde(default)]
        partition: Option<PathBuf>,
        equality_rows: usize,
        sigma: f64,
        #[serde(default)]
        data_seed: Option<u64>,
    },
    /// Per-agent costs and sets given verbatim.
    Explicit {
        dim: usize,
        costs: Vec<CostSpec>,
        sets: Vec<SetSpec>,
        #[serde(default)]
        witness: Option<Vec<f64>>,
    },
}

fn default_label_noise() -> f64 {
    1.0
}

/// Step sizes `alpha(t) = scale * n^n_power * (t + 1)^(-gamma)`, or constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    PolynomialDecay {
        scale: f64,
        gamma: f64,
        #[serde(default)]
        n_power: i32,
    },
    Constant {
        alpha: f64,
    },
}

impl ScheduleSpec {
    pub fn resolve(&self, n: usize) -> Result<StepSchedule> {
        match *self {
            ScheduleSpec::PolynomialDecay { scale, gamma, n_power } => {
                StepSchedule::polynomial_decay(scale * (n as f64).powi(n_power), gamma)
            }
            ScheduleSpec::Constant { alpha } => StepSchedule::constant(alpha),
        }
    }

    pub fn default_rescaled() -> Self {
        ScheduleSpec::PolynomialDecay {
            scale: 1.0,
            gamma: 0.8,
            n_power: -3,
        }
    }

    pub fn default_dps() -> Self {
        ScheduleSpec::PolynomialDecay {
            scale: 1.0,
            gamma: 0.8,
            n_power: -2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    /// Centralized projected subgradient with `alpha(t) = c (t+1)^(-gamma)`;
    /// `c` defaults to a curvature-based choice for logistic problems and
    /// `1 / L` otherwise.
    Solve {
        #[serde(default = "default_oracle_rounds")]
        rounds: usize,
        #[serde(default)]
        c: Option<f64>,
        #[serde(default = "default_oracle_gamma")]
        gamma: f64,
    },
    /// Externally computed reference.
    Given { x_star: Vec<f64>, f_star: f64 },
}

fn default_oracle_rounds() -> usize {
    1_000_000
}

fn default_oracle_gamma() -> f64 {
    0.75
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Solve {
            rounds: default_oracle_rounds(),
            c: None,
            gamma: default_oracle_gamma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Master seed; fills every seed the config leaves unset.
    pub seed: u64,
    pub graph: GraphSource,
    /// Edges `(i, j)` ("i receives from j") deleted after loading the graph.
    #[serde(default)]
    pub remove_edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub weights: WeightScheme,
    pub problem: ProblemSpec,
    #[serde(default = "ScheduleSpec::default_rescaled")]
    pub schedule: ScheduleSpec,
    #[serde(default = "ScheduleSpec::default_dps")]
    pub dps_schedule: ScheduleSpec,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub rounds: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default = "default_regularity")]
    pub regularity_r: f64,
    /// Horizon of the decay-constant fit; `None` uses the default.
    #[serde(default)]
    pub spectral_horizon: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory the config was loaded from, for relative paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_log_every() -> usize {
    10
}

fn default_regularity() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

impl ExperimentConfig {
    /// The small-scale version of the logistic-regression study: 6 agents on
    /// the demo digraph, 60 samples, 12 features, 6 equality rows.
    pub fn demo() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: Some("demo".into()),
            seed: 42,
            graph: GraphSource::Demo6,
            remove_edges: Vec::new(),
            weights: WeightScheme::Uniform,
            problem: ProblemSpec::Logistic {
                samples: 60,
                features: 12,
                equality_rows: 6,
                sigma: 5.0,
                data_seed: None,
                label_noise: default_label_noise(),
            },
            schedule: ScheduleSpec::default_rescaled(),
            dps_schedule: ScheduleSpec::default_dps(),
            algorithms: default_algorithms(),
            rounds: 200_000,
            log_every: 10,
            snapshot_every: 0,
            oracle: OracleSpec::default(),
            regularity_r: default_regularity(),
            spectral_horizon: None,
            output_dir: default_output_dir(),
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(Error::Config("missing schema_version".into())),
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text).map_err(|e| e.in_phase(format!("loading {}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if !(self.regularity_r >= 1.0) {
            return Err(Error::Config(format!("regularity_r = {} must be >= 1", self.regularity_r)));
        }
        match &self.problem {
            ProblemSpec::Logistic {
                samples,
                features,
                equality_rows,
                sigma,
                label_noise,
                ..
            } => {
                if *samples == 0 || *features == 0 {
                    return Err(Error::Config("logistic problem needs samples and features".into()));
                }
                if *equality_rows > *features {
                    return Err(Error::Config(format!(
                        "equality_rows = {equality_rows} exceeds features = {features}"
                    )));
                }
                if !(*sigma > 0.0) || !(*label_noise >= 0.0) {
                    return Err(Error::Config("sigma must be positive and label_noise nonnegative".into()));
                }
            }
            ProblemSpec::LogisticCsv { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(Error::Config("sigma must be positive".into()));
                }
            }
            ProblemSpec::Explicit { costs, sets, .. } => {
                if costs.len() != sets.len() {
                    return Err(Error::Config(format!("{} costs but {} sets", costs.len(), sets.len())));
                }
            }
        }
        if let OracleSpec::Solve { rounds, c, gamma } = &self.oracle {
            if *rounds == 0 || !(*gamma > 0.0 && *gamma <= 1.0) || c.is_some_and(|c| !(c > 0.0)) {
                return Err(Error::Config("oracle needs rounds >= 1, gamma in (0, 1], c > 0".into()));
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn schedule_for(&self, algorithm: Algorithm, n: usize) -> Result<StepSchedule> {
        if algorithm.is_rescaled() {
            self.schedule.resolve(n)
        } else {
            self.dps_schedule.resolve(n)
        }
    }

    /// Applies the `--seed` override to every seed derived from the master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
