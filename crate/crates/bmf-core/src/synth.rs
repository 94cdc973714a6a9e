//! Synthetic benchmark sampler.
//!
//! Latent factors are drawn from per-column Bernoulli priors whose rates are
//! either all equal to a density-calibrated `p` or drawn uniformly from
//! `[p - spread, p + spread]` (clamped to [0, 1]). The clean matrix is the
//! Boolean OR of AND products, flip noise toggles each entry independently,
//! and an observation mask hides a uniform random subset of cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, Mask, ObservedMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rank: usize,
    /// Target Pr(X = 1) of the clean matrix.
    pub target_density: f64,
    /// Half-width of the uniform prior interval around the calibrated rate.
    pub prior_spread: f64,
    /// True flip probability applied to the clean matrix.
    pub noise: f64,
    /// Fraction of cells kept observed, in (0, 1].
    pub observed_fraction: f64,
    /// Draw a separate Bernoulli rate per latent column instead of sharing
    /// the calibrated rate.
    pub vary_priors: bool,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n_rows: usize, n_cols: usize, rank: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            rank,
            target_density: 0.5,
            prior_spread: 0.2,
            noise: 0.0,
            observed_fraction: 1.0,
            vary_priors: true,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 || self.rank == 0 {
            return Err(Error::InvalidParameter(
                "dimensions and rank must be at least 1".into(),
            ));
        }
        if !(self.target_density > 0.0 && self.target_density < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target density {} outside (0, 1)",
                self.target_density
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::InvalidParameter(format!(
                "noise {} outside [0, 0.5)",
                self.noise
            )));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "observed fraction {} outside (0, 1]",
                self.observed_fraction
            )));
        }
        if !self.prior_spread.is_finite() || self.prior_spread < 0.0 {
            return Err(Error::InvalidParameter("prior spread must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated benchmark instance with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub u: BinaryMatrix,
    pub z: BinaryMatrix,
    pub x_clean: BinaryMatrix,
    pub x_noisy: ObservedMatrix,
    pub true_epsilon: f64,
}

/// Invert the density calibration: the shared Bernoulli rate `p` for which a
/// rank-`L` Boolean product has `Pr(X = 1) = 1 - (1 - p^2)^L` equal to the
/// target density.
pub fn density_to_p(target_density: f64, rank: usize) -> Result<f64> {
    if !(target_density > 0.0 && target_density < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target density {target_density} outside (0, 1)"
        )));
    }
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    Ok((1.0 - (1.0 - target_density).powf(1.0 / rank as f64)).sqrt())
}

fn sample_binary<R: Rng>(
    n_rows: usize,
    rank: usize,
    rates: &[f64],
    rng: &mut R,
) -> BinaryMatrix {
    let mut out = BinaryMatrix::zeros(n_rows, rank);
    for row in 0..n_rows {
        for (col, &rate) in rates.iter().enumerate().take(rank) {
            out.set(row, col, u8::from(rng.gen::<f64>() < rate));
        }
    }
    out
}

/// Boolean OR of AND products of two binary factor matrices.
pub fn boolean_product(u: &BinaryMatrix, z: &BinaryMatrix) -> Result<BinaryMatrix> {
    if u.n_cols() != z.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "U rank {} vs Z rank {}",
            u.n_cols(),
            z.n_cols()
        )));
    }
    let rank = u.n_cols();
    let mut out = BinaryMatrix::zeros(u.n_rows(), z.n_rows());
    for row in 0..u.n_rows() {
        for col in 0..z.n_rows() {
            let hit = (0..rank).any(|l| u.get(row, l) == 1 && z.get(col, l) == 1);
            out.set(row, col, u8::from(hit));
        }
    }
    Ok(out)
}

/// Sample a benchmark instance. The draw order (priors, U, Z, flips, mask)
/// is fixed, so a seed fully determines the instance.
pub fn generate(config: &SynthConfig) -> Result<SynthInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = density_to_p(config.target_density, config.rank)?;

    let sample_rates = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..config.rank)
            .map(|_| {
                if config.vary_priors {
                    let raw =
                        rng.gen_range(p - config.prior_spread..=p + config.prior_spread);
                    raw.clamp(0.0, 1.0)
                } else {
                    p
                }
            })
            .collect()
    };
    let omega = sample_rates(&mut rng);
    let theta = sample_rates(&mut rng);

    let u = sample_binary(config.n_rows, config.rank, &omega, &mut rng);
    let z = sample_binary(config.n_cols, config.rank, &theta, &mut rng);
    let x_clean = boolean_product(&u, &z)?;

    let mut noisy = x_clean.clone();
    if config.noise > 0.0 {
        for row in 0..config.n_rows {
            for col in 0..config.n_cols {
                if rng.gen::<f64>() < config.noise {
                    noisy.set(row, col, 1 - noisy.get(row, col));
                }
            }
        }
    }

    let mask = if config.observed_fraction >= 1.0 {
        Mask::full(config.n_rows, config.n_cols)
    } else {
        let total = config.n_rows * config.n_cols;
        let keep = (total as f64 * config.observed_fraction).floor() as usize;
        let mut mask = Mask::empty(config.n_rows, config.n_cols);
        for idx in rand::seq::index::sample(&mut rng, total, keep) {
            mask.set(idx / config.n_cols, idx % config.n_cols, true);
        }
        mask
    };

    Ok(SynthInstance {
        u,
        z,
        x_clean,
        x_noisy: ObservedMatrix::new(noisy, mask)?,
        true_epsilon: config.noise,
    })
}
