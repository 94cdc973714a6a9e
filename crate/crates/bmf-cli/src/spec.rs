//! Sweep specification parsed from a TOML file.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bmf_core::em::EmConfig;
use bmf_core::model::BetaPrior;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Grid of flip probabilities on fully observed synthetic matrices.
    NoiseSweep,
    /// Grid of observed fractions on synthetic matrices at fixed noise.
    CompletionSweep,
    /// Grid of observed fractions on a binarized ratings matrix.
    Movielens,
}

fn default_repetitions() -> usize {
    10
}

fn default_density() -> f64 {
    0.5
}

fn default_noise() -> f64 {
    0.2
}

fn default_rank() -> usize {
    5
}

fn default_true() -> bool {
    true
}

/// Optional overrides of the EM defaults, applied on top of
/// [`EmConfig::new`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSettings {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub eps_tolerance: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub max_inner_iters: Option<usize>,
    pub stability_window: Option<usize>,
    pub exact_noise_estimate: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub mode: SweepMode,
    /// Noise levels (noise-sweep) or observed fractions (completion-sweep,
    /// movielens).
    pub grid: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,

    // Synthetic instance geometry.
    #[serde(default)]
    pub n_rows: usize,
    #[serde(default)]
    pub n_cols: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_true")]
    pub vary_priors: bool,
    /// Flip probability of completion-sweep instances.
    #[serde(default = "default_noise")]
    pub noise: f64,

    // MovieLens-style input.
    pub ratings_path: Option<PathBuf>,
    pub delimiter: Option<String>,
    #[serde(default)]
    pub ties_as_one: bool,

    #[serde(default)]
    pub em: EmSettings,
}

impl SweepSpec {
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading sweep spec {}", path.display()))?;
        let spec: SweepSpec =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            bail!("grid must not be empty");
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        match self.mode {
            SweepMode::NoiseSweep | SweepMode::CompletionSweep => {
                if self.n_rows == 0 || self.n_cols == 0 {
                    bail!("synthetic sweeps need n_rows and n_cols");
                }
            }
            SweepMode::Movielens => {
                if self.ratings_path.is_none() {
                    bail!("movielens mode needs ratings_path");
                }
            }
        }
        Ok(())
    }

    /// EM configuration with the spec's overrides applied.
    pub fn em_config(&self, seed: u64) -> Result<EmConfig> {
        let mut config = EmConfig::new(self.rank).with_seed(seed);
        let alpha = self.em.alpha.unwrap_or(config.prior.alpha());
        let beta = self.em.beta.unwrap_or(config.prior.beta());
        config.prior = BetaPrior::new(alpha, beta)?;
        if let Some(v) = self.em.eps_tolerance {
            config.eps_tolerance = v;
        }
        if let Some(v) = self.em.max_outer_iters {
            config.max_outer_iters = v;
        }
        if let Some(v) = self.em.max_inner_iters {
            config.rprop.max_inner_iters = v;
        }
        if let Some(v) = self.em.stability_window {
            config.rprop.stability_window = v;
        }
        if let Some(v) = self.em.exact_noise_estimate {
            config.exact_noise_estimate = v;
        }
        Ok(config)
    }
}
