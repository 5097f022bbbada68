use std::path::PathBuf;

use anyhow::{bail, Result};
use gpcompose::gp::NoisePolicy;
use gpcompose::search::{Operator, SearchConfig};
use gpcompose::BaseKind;
use serde::{Deserialize, Serialize};

/// How the trailing test suffix is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Count(usize),
    /// Fraction of rows held out, rounded to the nearest row.
    Fraction(f64),
}

impl Split {
    pub fn test_count(self, rows: usize) -> Result<usize> {
        let n = match self {
            Split::Count(n) => n,
            Split::Fraction(f) => {
                if !(0.0..1.0).contains(&f) {
                    bail!("test fraction must be in [0, 1), got {f}");
                }
                (f * rows as f64).round() as usize
            }
        };
        if n >= rows {
            bail!("test split of {n} rows leaves no training data ({rows} rows)");
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Search,
    Fixed {
        kernel: String,
        /// Keep the given hyperparameters instead of fitting them.
        #[serde(default)]
        no_fit: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub max_depth: usize,
    pub beam_width: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub operators: Vec<Operator>,
    pub base_kernels: Vec<String>,
    /// Initial noise variance; learned during fitting unless `fixed_noise`.
    pub noise: f64,
    pub fixed_noise: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = SearchConfig::default();
        SearchSettings {
            max_depth: d.max_depth,
            beam_width: d.beam_width,
            restarts: d.restarts,
            max_iters: d.max_iters,
            operators: d.operators,
            base_kernels: d.base_set.iter().map(|k| k.name().to_string()).collect(),
            noise: 0.1,
            fixed_noise: false,
        }
    }
}

impl SearchSettings {
    pub fn noise_policy(&self) -> NoisePolicy {
        if self.fixed_noise {
            NoisePolicy::Fixed(self.noise)
        } else {
            NoisePolicy::Learn { initial: self.noise }
        }
    }

    pub fn to_search_config(&self, seed: u64) -> Result<SearchConfig> {
        let base_set = self
            .base_kernels
            .iter()
            .map(|n| BaseKind::from_name(n).ok_or_else(|| anyhow::anyhow!("unknown base kernel `{n}`")))
            .collect::<Result<Vec<_>>>()?;
        let cfg = SearchConfig {
            max_depth: self.max_depth,
            base_set,
            operators: self.operators.clone(),
            beam_width: self.beam_width,
            restarts: self.restarts,
            max_iters: self.max_iters,
            seed,
            noise: self.noise_policy(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub time_column: String,
    pub value_column: String,
    pub split: Split,
    #[serde(flatten)]
    pub mode: Mode,
    pub search: SearchSettings,
    pub output: PathBuf,
    pub seed: u64,
    pub interval_level: f64,
    /// Intervals from the latent posterior only, without observation noise.
    pub latent_only: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_level > 0.0 && self.interval_level < 1.0) {
            bail!("interval level must be in (0, 1), got {}", self.interval_level);
        }
        if let Mode::Fixed { kernel, .. } = &self.mode {
            if kernel.trim().is_empty() {
                bail!("kernel text is empty");
            }
        }
        if !(self.search.noise.is_finite() && self.search.noise >= 0.0) {
            bail!("noise variance must be finite and non-negative");
        }
        Ok(())
    }
}

/// `run.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub seed: u64,
    pub versions: Versions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub gpcompose: String,
    pub cli: String,
}

impl Versions {
    pub fn current() -> Versions {
        Versions {
            gpcompose: gpcompose::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
