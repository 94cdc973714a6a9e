//! Implementations of the `factorize`, `complete`, `synth`, and `bench`
//! subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use bmf_core::em::{self, EmConfig, FitResult};
use bmf_core::io::{read_matrix, write_matrix, write_real_matrix, MatrixFormat};
use bmf_core::matrix::{BinaryMatrix, Mask, ObservedMatrix};
use bmf_core::model::BetaPrior;
use bmf_core::synth::{density_to_p, generate, SynthConfig};
use serde::Serialize;

use crate::bench::{run_sweep, write_table};
use crate::spec::SweepSpec;

/// Process exit codes: 0 converged, 1 runtime error, 2 usage (clap), 3 the
/// EM loop hit its outer iteration cap.
pub const EXIT_CAPPED: i32 = 3;

/// Flags shared by `factorize` and `complete`.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub rank: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eps_tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub stability_window: usize,
    pub seed: u64,
    pub exact_noise: bool,
}

impl FitOptions {
    pub fn em_config(&self) -> Result<EmConfig> {
        let mut config = EmConfig::new(self.rank).with_seed(self.seed);
        config.prior = BetaPrior::new(self.alpha, self.beta)?;
        config.eps_tolerance = self.eps_tolerance;
        config.max_outer_iters = self.max_outer;
        config.rprop.max_inner_iters = self.max_inner;
        config.rprop.stability_window = self.stability_window;
        config.exact_noise_estimate = self.exact_noise;
        Ok(config)
    }
}

fn out_prefix(input: &Path, prefix: &Option<PathBuf>) -> PathBuf {
    prefix.clone().unwrap_or_else(|| input.to_path_buf())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn report_line(fit: &FitResult, wall_ms: f64) -> String {
    format!(
        "objective,epsilon,outer_iters,converged,wall_ms\n{},{},{},{},{}",
        fit.objective, fit.epsilon, fit.outer_iters, fit.converged, wall_ms
    )
}

fn run_fit(input: &Path, options: &FitOptions) -> Result<(ObservedMatrix, FitResult, f64)> {
    let x = read_matrix(input)?;
    let config = options.em_config()?;
    let start = Instant::now();
    let fit = em::fit(&x, &config)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((x, fit, wall_ms))
}

/// Fit a factorization and write factors, reconstruction, and a report row.
pub fn cmd_factorize(input: &Path, options: &FitOptions, prefix: &Option<PathBuf>) -> Result<i32> {
    let (x, fit, wall_ms) = run_fit(input, options)?;
    let prefix = out_prefix(input, prefix);
    write_real_matrix(&fit.mu, with_suffix(&prefix, ".mu.txt"))?;
    write_real_matrix(&fit.zeta, with_suffix(&prefix, ".zeta.txt"))?;
    let recon = ObservedMatrix::fully_observed(fit.reconstruction.clone())?;
    write_matrix(&recon, with_suffix(&prefix, ".recon.bmf"), MatrixFormat::Dense)?;
    drop(x);
    println!("{}", report_line(&fit, wall_ms));
    Ok(if fit.converged { 0 } else { EXIT_CAPPED })
}

/// Fit on the observed cells and write the completed matrix; optionally the
/// imputed (previously missing) cells as a sparse file.
pub fn cmd_complete(
    input: &Path,
    options: &FitOptions,
    prefix: &Option<PathBuf>,
    heldout_out: &Option<PathBuf>,
) -> Result<i32> {
    let (x, fit, wall_ms) = run_fit(input, options)?;
    let prefix = out_prefix(input, prefix);
    let completed = ObservedMatrix::fully_observed(fit.reconstruction.clone())?;
    write_matrix(
        &completed,
        with_suffix(&prefix, ".completed.bmf"),
        MatrixFormat::Dense,
    )?;
    if let Some(path) = heldout_out {
        // Imputed cells only: the reconstruction restricted to cells the
        // input did not observe.
        let missing = x.mask().complement();
        let imputed = ObservedMatrix::new(fit.reconstruction.clone(), missing)?;
        write_matrix(&imputed, path, MatrixFormat::Triplets)?;
    }
    println!("{}", report_line(&fit, wall_ms));
    Ok(if fit.converged { 0 } else { EXIT_CAPPED })
}

#[derive(Debug, Serialize)]
struct SynthMetadata {
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    target_density: f64,
    calibrated_p: f64,
    prior_spread: f64,
    noise: f64,
    observed_fraction: f64,
    vary_priors: bool,
    seed: u64,
    true_epsilon: f64,
}

/// Generate a synthetic instance and write its parts plus a JSON metadata
/// sidecar.
pub fn cmd_synth(config: &SynthConfig, prefix: &Path) -> Result<i32> {
    let inst = generate(config)?;
    write_matrix(
        &inst.x_noisy,
        with_suffix(prefix, ".noisy.bmf"),
        MatrixFormat::Dense,
    )?;
    let full = |m: &BinaryMatrix| -> Result<ObservedMatrix> {
        Ok(ObservedMatrix::new(
            m.clone(),
            Mask::full(m.n_rows(), m.n_cols()),
        )?)
    };
    write_matrix(
        &full(&inst.x_clean)?,
        with_suffix(prefix, ".clean.bmf"),
        MatrixFormat::Dense,
    )?;
    write_matrix(&full(&inst.u)?, with_suffix(prefix, ".u.bmf"), MatrixFormat::Dense)?;
    write_matrix(&full(&inst.z)?, with_suffix(prefix, ".z.bmf"), MatrixFormat::Dense)?;
    let meta = SynthMetadata {
        n_rows: config.n_rows,
        n_cols: config.n_cols,
        rank: config.rank,
        target_density: config.target_density,
        calibrated_p: density_to_p(config.target_density, config.rank)?,
        prior_spread: config.prior_spread,
        noise: config.noise,
        observed_fraction: config.observed_fraction,
        vary_priors: config.vary_priors,
        seed: config.seed,
        true_epsilon: inst.true_epsilon,
    };
    let meta_path = with_suffix(prefix, ".meta.json");
    let file = std::fs::File::create(&meta_path)
        .with_context(|| format!("creating {}", meta_path.display()))?;
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(0)
}

/// Run a sweep described by a TOML spec and write the results table.
pub fn cmd_bench(spec_path: &Path) -> Result<i32> {
    let spec = SweepSpec::from_toml_file(spec_path)?;
    let rows = run_sweep(&spec)?;
    write_table(&rows, &spec.output)?;
    for row in rows.iter().filter(|r| r.kind == "summary") {
        println!("{}", row.to_csv());
    }
    Ok(0)
}
