//! Run configuration shared by the pipeline subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bnb::SolveBudget;
use crate::diving::DiveConfig;
use crate::error::{Error, Result};
use crate::eval::{Axis, GAP_THRESHOLD_PRESETS};
use crate::expert::{EtaSchedule, ExpertConfig};
use crate::generate::{Family, GeneratorConfig};
use crate::io::{read_json, write_json};
use crate::lns::EpisodeConfig;
use crate::neural::{PolicyConfig, TrainConfig};

pub const SEED_ENV: &str = "LNSFORGE_SEED";
pub const OUT_ENV: &str = "LNSFORGE_OUT";

/// Where initial assignments come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    Bnb,
    Dive,
}

impl InitChoice {
    pub fn label(self) -> &'static str {
        match self {
            InitChoice::Bnb => "bnb",
            InitChoice::Dive => "dive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    Random,
    Neural,
    Expert,
}

impl PolicyChoice {
    pub fn label(self) -> &'static str {
        match self {
            PolicyChoice::Random => "random",
            PolicyChoice::Neural => "neural",
            PolicyChoice::Expert => "expert",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertDataConfig {
    pub expert: ExpertConfig,
    pub init: InitChoice,
}

impl Default for ExpertDataConfig {
    fn default() -> Self {
        ExpertDataConfig {
            expert: ExpertConfig {
                eta: EtaSchedule::Fraction(0.2),
                t_max: 10,
                budget: SolveBudget::nodes(20_000),
                init_budget: SolveBudget::nodes(5_000),
            },
            init: InitChoice::Bnb,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub episode: EpisodeConfig,
    /// Parallel runs per instance, seeded `seed + k`.
    pub n_runs: usize,
    /// Budget for the first-incumbent start.
    pub init_budget: SolveBudget,
    pub dive: DiveConfig,
    /// Local-branching budget when the expert is the policy.
    pub expert_budget: SolveBudget,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            episode: EpisodeConfig {
                max_steps: 10,
                record_wall_time: false,
                ..EpisodeConfig::default()
            },
            n_runs: 1,
            init_budget: SolveBudget::nodes(5_000),
            dive: DiveConfig::default(),
            expert_budget: SolveBudget::nodes(20_000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub axis: Axis,
    /// Grid size in time mode; step mode uses every step.
    pub grid_points: usize,
    /// Upper end of the time grid in ms.
    pub time_horizon_ms: f64,
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            axis: Axis::Step,
            grid_points: 50,
            time_horizon_ms: 60_000.0,
            thresholds: GAP_THRESHOLD_PRESETS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub generator: GeneratorConfig,
    pub best_known_budget: SolveBudget,
    pub expert_data: ExpertDataConfig,
    pub diving: TrainConfig,
    pub nns: TrainConfig,
    pub solve: SolveConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let small = PolicyConfig {
            gcn_layers: 2,
            embed: 16,
            hidden: 16,
            window: 3,
            seed: 0,
        };
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            generator: GeneratorConfig {
                family: Family::SetCover,
                ..GeneratorConfig::default()
            },
            best_known_budget: SolveBudget::nodes(200_000),
            expert_data: ExpertDataConfig::default(),
            diving: TrainConfig {
                policy: PolicyConfig { window: 0, ..small },
                epochs: 150,
                lr: 1e-3,
                ..TrainConfig::default()
            },
            nns: TrainConfig {
                policy: small,
                epochs: 150,
                lr: 1e-3,
                ..TrainConfig::default()
            },
            solve: SolveConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a JSON config. Missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Applies `LNSFORGE_SEED` and `LNSFORGE_OUT` from the environment.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_overrides(std::env::var(SEED_ENV).ok(), std::env::var(OUT_ENV).ok())
    }

    pub fn apply_overrides(&mut self, seed: Option<String>, out: Option<String>) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("{SEED_ENV}={s} is not an unsigned integer"))
            })?;
        }
        if let Some(o) = out {
            self.out = PathBuf::from(o);
        }
        Ok(())
    }

    /// The top-level seed feeds every stage that takes one.
    pub fn seeded(&self) -> RunConfig {
        let mut c = self.clone();
        c.generator.seed = self.seed;
        c.diving.seed = self.seed;
        c.diving.policy.seed = self.seed;
        c.nns.seed = self.seed;
        c.nns.policy.seed = self.seed;
        c.solve.dive.seed = self.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.best_known_budget.validate()?;
        self.expert_data.expert.budget.validate()?;
        self.solve.episode.validate()?;
        if self.solve.n_runs == 0 {
            return Err(Error::InvalidParameter("solve.n_runs must be at least 1".into()));
        }
        if self.nns.policy.window == 0 {
            return Err(Error::InvalidParameter(
                "nns.policy.window must be positive (history features)".into(),
            ));
        }
        if self.eval.thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidParameter("gap thresholds must be >= 0".into()));
        }
        Ok(())
    }
}
