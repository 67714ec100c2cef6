//! The run configuration: one TOML file, every key optional.
//!
//! Top-level keys apply to every command; each command reads its own table.
//! Command-line flags overwrite the file's values.

use std::path::{Path, PathBuf};

use dmof_core::generate::{ExplicitGen, ScoredGen};
use dmof_core::lemmalab::LemmaSuiteConfig;
use dmof_core::sequential::SeqGen;
use dmof_core::supervised::SlGen;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub eps: f64,
    /// When set, replaces every command's own confidence level.
    pub delta: Option<f64>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Instance file read by `edd`, `eoec`, `oec`, `lower-bound`,
    /// `rate-sweep` and `sl-sweep`. Without one, those commands generate an
    /// instance from `seed` and the `[gen]` table.
    pub instance: Option<PathBuf>,
    pub gen: GenConfig,
    pub edd: EddConfig,
    pub eoec: EoecConfig,
    pub oec: OecConfig,
    pub lower_bound: LowerBoundConfig,
    pub rate_sweep: RateSweepConfig,
    pub sl_sweep: SlSweepConfig,
    pub lemmas: LemmaSuiteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            eps: 1e-7,
            delta: None,
            threads: 0,
            out_dir: PathBuf::from("out"),
            instance: None,
            gen: GenConfig::default(),
            edd: EddConfig::default(),
            eoec: EoecConfig::default(),
            oec: OecConfig::default(),
            lower_bound: LowerBoundConfig::default(),
            rate_sweep: RateSweepConfig::default(),
            sl_sweep: SlSweepConfig::default(),
            lemmas: LemmaSuiteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    #[default]
    Explicit,
    Scored,
    Sequential,
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub kind: InstanceKind,
    /// File name inside `out_dir`.
    pub output: String,
    pub explicit: ExplicitGen,
    pub scored: ScoredGen,
    pub sequential: SeqGen,
    pub supervised: SlGen,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            kind: InstanceKind::Explicit,
            output: "instance.toml".into(),
            explicit: ExplicitGen::default(),
            scored: ScoredGen::default(),
            sequential: SeqGen::default(),
            supervised: SlGen::default(),
        }
    }
}

/// How a dataset is obtained when the instance is not already scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Observation index for explicit instances; drawn from the real model when absent.
    pub observation: Option<usize>,
    /// Trajectories drawn for sequential instances.
    pub samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { observation: None, samples: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EddConfig {
    pub lambda: f64,
    #[serde(flatten)]
    pub data: DataConfig,
}

impl Default for EddConfig {
    fn default() -> Self {
        Self { lambda: 0.5, data: DataConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EoecConfig {
    pub lambdas: Vec<f64>,
    #[serde(flatten)]
    pub data: DataConfig,
}

impl Default for EoecConfig {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 0.1, 1.0], data: DataConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceChoice {
    #[default]
    All,
    Tv,
    H2,
    Kl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OecConfig {
    pub lambda: f64,
    pub divergence: DivergenceChoice,
    /// Dataset draws for the high-probability EOEC bound; 0 skips it.
    pub trials: usize,
    pub delta: f64,
}

impl Default for OecConfig {
    fn default() -> Self {
        Self { lambda: 0.5, divergence: DivergenceChoice::All, trials: 2000, delta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub divergence: DivergenceChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSweepConfig {
    pub grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    /// Generator used when no instance file is given.
    pub testbed: SeqGen,
    pub svg: bool,
}

impl Default for RateSweepConfig {
    fn default() -> Self {
        Self {
            grid: (6..=13).map(|k| 1usize << k).collect(),
            trials: 50,
            delta: 0.1,
            testbed: SeqGen::default(),
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlSweepConfig {
    pub grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    /// Score regret (losses minus each model's best) instead of raw loss.
    pub centered: bool,
    pub testbed: SlGen,
    pub svg: bool,
}

impl Default for SlSweepConfig {
    fn default() -> Self {
        Self {
            grid: (5..=12).map(|k| 1usize << k).collect(),
            trials: 200,
            delta: 0.1,
            centered: true,
            testbed: SlGen::default(),
            svg: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Pushes the global `delta` into every command that has its own.
    pub fn apply_global_delta(&mut self) {
        if let Some(d) = self.delta {
            self.oec.delta = d;
            self.rate_sweep.delta = d;
            self.sl_sweep.delta = d;
            self.lemmas.delta = d;
        }
        self.lemmas.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        let deltas = [
            ("oec.delta", self.oec.delta),
            ("rate_sweep.delta", self.rate_sweep.delta),
            ("sl_sweep.delta", self.sl_sweep.delta),
            ("lemmas.delta", self.lemmas.delta),
        ];
        for (name, d) in deltas {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {d}"));
            }
        }
        for (name, grid) in [("rate_sweep.grid", &self.rate_sweep.grid), ("sl_sweep.grid", &self.sl_sweep.grid)] {
            if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{name} must be strictly increasing positive integers"));
            }
        }
        let lambdas = std::iter::once(self.edd.lambda).chain(self.eoec.lambdas.iter().copied()).chain([self.oec.lambda]);
        for l in lambdas {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be finite and non-negative, got {l}"));
            }
        }
        if self.eoec.lambdas.is_empty() {
            return bad("eoec.lambdas is empty".into());
        }
        Ok(())
    }
}
