//! The generative model and its gradients.
//!
//! Latent Bernoulli parameters are reparameterized through the logistic
//! sigmoid, `mu = sigmoid(A)` (N x L) and `zeta = sigmoid(B)` (M x L). The
//! clean probability of a 1 at cell (n, m) is the noisy-OR mixture
//!
//! ```text
//! P[n,m] = 1 - prod_l (1 - mu[n,l] * zeta[m,l])
//! ```
//!
//! and a scalar flip probability `eps` mixes it to
//! `P* = (1 - eps) * P + eps * (1 - P)`. The objective is the Bernoulli
//! log-likelihood of the observed entries under `P*`, plus elementwise
//! `Beta(alpha, beta)` log-prior terms on `mu` and `zeta`. Gradients with
//! respect to `A` and `B` are derived by the chain rule:
//!
//! ```text
//! dLL/dA[n,l] = sum_m (1-2eps) * (X*[n,m] - P*[n,m]) / (P* (1-P*))
//!               * zeta[m,l] * (1-P[n,m]) / (1 - mu[n,l] zeta[m,l])
//!               * mu[n,l] (1 - mu[n,l])
//! ```
//!
//! (symmetrically for `B`), with masked cells contributing nothing. The
//! per-cell factor is evaluated from `q = prod_l (1 - mu zeta) = 1 - P`
//! directly, which keeps it finite when the product saturates.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, ObservedMatrix, RealMatrix};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs
/// and gradient denominators so saturated parameters cannot produce
/// infinities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Margin keeping `1 - 2*eps` strictly positive.
pub const EPSILON_MARGIN: f64 = 1e-6;

/// Largest admissible flip probability, `0.5 - EPSILON_MARGIN`.
pub const EPSILON_MAX: f64 = 0.5 - EPSILON_MARGIN;

/// Logistic sigmoid, strictly inside (0, 1) for finite input of moderate
/// magnitude.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained factor parameters `A` (N x L) and `B` (M x L).
///
/// The optimizer keeps every entry inside `[-clip_bound, clip_bound]`, which
/// in turn keeps `mu` and `zeta` strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorParams {
    a: RealMatrix,
    b: RealMatrix,
}

impl FactorParams {
    pub fn new(a: RealMatrix, b: RealMatrix) -> Result<Self> {
        if a.n_cols() != b.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "A has rank {}, B has rank {}",
                a.n_cols(),
                b.n_cols()
            )));
        }
        if a.n_cols() == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        Ok(Self { a, b })
    }

    /// i.i.d. Gaussian(0, std) initialization, `A` sampled before `B`, both
    /// row-major, so a seeded RNG reproduces the same parameters.
    pub fn init_gaussian<R: Rng>(
        n_rows: usize,
        m_rows: usize,
        rank: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidParameter(format!("bad init std: {e}")))?;
        let a: Vec<f64> = (0..n_rows * rank).map(|_| normal.sample(rng)).collect();
        let b: Vec<f64> = (0..m_rows * rank).map(|_| normal.sample(rng)).collect();
        Self::new(
            RealMatrix::from_vec(n_rows, rank, a)?,
            RealMatrix::from_vec(m_rows, rank, b)?,
        )
    }

    pub fn rank(&self) -> usize {
        self.a.n_cols()
    }

    pub fn a(&self) -> &RealMatrix {
        &self.a
    }

    pub fn b(&self) -> &RealMatrix {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut RealMatrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut RealMatrix {
        &mut self.b
    }

    /// Row-factor probabilities `sigmoid(A)`.
    pub fn mu(&self) -> RealMatrix {
        self.a.map(sigmoid)
    }

    /// Column-factor probabilities `sigmoid(B)`.
    pub fn zeta(&self) -> RealMatrix {
        self.b.map(sigmoid)
    }
}

/// Scalar flip probability in `[0, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    epsilon: f64,
}

impl NoiseModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || !(0.0..=EPSILON_MAX).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "flip probability {epsilon} outside [0, {EPSILON_MAX}]"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn noiseless() -> Self {
        Self { epsilon: 0.0 }
    }

    /// Clamp a raw estimate into the admissible range. The second value is
    /// true when clamping actually changed it, which signals a degenerate
    /// fit (estimated flip probability at or above one half).
    pub fn clamped(raw: f64) -> (Self, bool) {
        let eps = raw.clamp(0.0, EPSILON_MAX);
        (Self { epsilon: eps }, eps != raw)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Shared Beta prior shape on every entry of `mu` and `zeta`.
///
/// `alpha = beta = 1` recovers pure maximum likelihood; values below 1 push
/// factor probabilities towards 0/1, values above 1 towards one half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    alpha: f64,
    beta: f64,
}

impl BetaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Beta prior shapes must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// The neutral prior `Beta(1, 1)`.
    pub fn flat() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_flat(&self) -> bool {
        self.alpha == 1.0 && self.beta == 1.0
    }
}

/// Noisy-OR probability matrix from explicit factor probabilities.
///
/// `mu` is N x L, `zeta` is M x L; the result is N x M with
/// `P[n,m] = 1 - prod_l (1 - mu[n,l] zeta[m,l])`.
pub fn or_product_probability(mu: &RealMatrix, zeta: &RealMatrix) -> Result<RealMatrix> {
    if mu.n_cols() != zeta.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "mu rank {} vs zeta rank {}",
            mu.n_cols(),
            zeta.n_cols()
        )));
    }
    let (n, m, rank) = (mu.n_rows(), zeta.n_rows(), mu.n_cols());
    let mut out = RealMatrix::zeros(n, m);
    for row in 0..n {
        let mu_row = mu.row(row);
        for col in 0..m {
            let zeta_row = zeta.row(col);
            let mut q = 1.0;
            for k in 0..rank {
                q *= 1.0 - mu_row[k] * zeta_row[k];
            }
            out.set(row, col, 1.0 - q);
        }
    }
    Ok(out)
}

/// Clean (noise-free) probability of a 1 at every cell.
pub fn clean_probability(params: &FactorParams) -> RealMatrix {
    or_product_probability(&params.mu(), &params.zeta())
        .expect("factor ranks agree by construction")
}

/// Mix a probability matrix with flip noise:
/// `P* = (1 - eps) P + eps (1 - P)`.
pub fn noisy_probability(p: &RealMatrix, noise: &NoiseModel) -> RealMatrix {
    let eps = noise.epsilon();
    p.map(|v| (1.0 - eps) * v + eps * (1.0 - v))
}

/// Bernoulli log-likelihood of the observed entries under `p_star`.
///
/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before the
/// logs. A fully masked matrix yields 0 (the empty sum); callers must treat
/// that as degenerate.
pub fn log_likelihood(x: &ObservedMatrix, p_star: &RealMatrix) -> Result<f64> {
    if x.n_rows() != p_star.n_rows() || x.n_cols() != p_star.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "observations {}x{} vs probabilities {}x{}",
            x.n_rows(),
            x.n_cols(),
            p_star.n_rows(),
            p_star.n_cols()
        )));
    }
    let mut total = 0.0;
    for row in 0..x.n_rows() {
        for col in 0..x.n_cols() {
            if !x.is_observed(row, col) {
                continue;
            }
            let ps = p_star.get(row, col);
            total += if x.value(row, col) == 1 {
                ps.max(PROB_FLOOR).ln()
            } else {
                (1.0 - ps).max(PROB_FLOOR).ln()
            };
        }
    }
    if !total.is_finite() {
        return Err(Error::NumericalDomain(
            "log-likelihood is not finite; a probability collapsed to 0/1".into(),
        ));
    }
    Ok(total)
}

/// Joint objective and analytic gradients, plus the thresholded
/// reconstruction, all computed in one pass over the cells.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub grad_a: RealMatrix,
    pub grad_b: RealMatrix,
    pub reconstruction: BinaryMatrix,
}

/// One fused pass: objective (log-posterior), gradients with respect to `A`
/// and `B`, and the reconstruction `P* >= 0.5`.
///
/// This is the per-iteration kernel of the optimizer; cost is O(N M L).
/// Missing entries contribute to the reconstruction only, never to the
/// objective or the gradients.
pub fn evaluate(
    x: &ObservedMatrix,
    params: &FactorParams,
    noise: &NoiseModel,
    prior: &BetaPrior,
) -> Result<Evaluation> {
    let (n, m, rank) = (x.n_rows(), x.n_cols(), params.rank());
    if params.a().n_rows() != n || params.b().n_rows() != m {
        return Err(Error::DimensionMismatch(format!(
            "data {}x{} vs A {}x{}, B {}x{}",
            n,
            m,
            params.a().n_rows(),
            rank,
            params.b().n_rows(),
            params.b().n_cols()
        )));
    }
    let mu = params.mu();
    let zeta = params.zeta();
    let eps = noise.epsilon();
    let scale = 1.0 - 2.0 * eps;

    let mut objective = 0.0;
    let mut grad_a = vec![0.0; n * rank];
    let mut grad_b = vec![0.0; m * rank];
    let mut recon = vec![0u8; n * m];

    for row in 0..n {
        let mu_row = mu.row(row);
        let ga_row = &mut grad_a[row * rank..(row + 1) * rank];
        for col in 0..m {
            let zeta_row = zeta.row(col);
            // q = prod_l (1 - mu zeta) = 1 - P, kept as the exact product.
            let mut q = 1.0;
            for k in 0..rank {
                q *= 1.0 - mu_row[k] * zeta_row[k];
            }
            let p = 1.0 - q;
            let p_star = (1.0 - eps) * p + eps * (1.0 - p);
            recon[row * m + col] = (p_star >= 0.5) as u8;

            if !x.is_observed(row, col) {
                continue;
            }
            // Per-cell gradient factor g = (1-2eps)(X*-P*) q / (P*(1-P*));
            // branching on X* collapses it to a single quotient per side and
            // avoids evaluating 1-P* by subtraction when it is tiny.
            let g = if x.value(row, col) == 1 {
                objective += p_star.max(PROB_FLOOR).ln();
                scale * q / p_star.max(PROB_FLOOR)
            } else {
                objective += (1.0 - p_star).max(PROB_FLOOR).ln();
                let one_minus_p_star = (1.0 - eps) * q + eps * (1.0 - q);
                -scale * q / one_minus_p_star.max(PROB_FLOOR)
            };
            let gb_row = &mut grad_b[col * rank..(col + 1) * rank];
            for k in 0..rank {
                let t = mu_row[k] * zeta_row[k];
                let shared = g * t / (1.0 - t);
                ga_row[k] += shared * (1.0 - mu_row[k]);
                gb_row[k] += shared * (1.0 - zeta_row[k]);
            }
        }
    }

    if !prior.is_flat() {
        // d/dA of (a-1) ln mu + (b-1) ln(1-mu) is (a-1)(1-mu) - (b-1) mu.
        let am = prior.alpha() - 1.0;
        let bm = prior.beta() - 1.0;
        for (g, &mv) in grad_a.iter_mut().zip(mu.as_slice()) {
            objective += am * mv.ln() + bm * (1.0 - mv).ln();
            *g += am * (1.0 - mv) - bm * mv;
        }
        for (g, &zv) in grad_b.iter_mut().zip(zeta.as_slice()) {
            objective += am * zv.ln() + bm * (1.0 - zv).ln();
            *g += am * (1.0 - zv) - bm * zv;
        }
    }

    if !objective.is_finite()
        || grad_a.iter().any(|v| !v.is_finite())
        || grad_b.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NumericalDomain(
            "objective or gradient is not finite; a probability collapsed to 0/1".into(),
        ));
    }

    Ok(Evaluation {
        objective,
        grad_a: RealMatrix::from_vec(n, rank, grad_a)?,
        grad_b: RealMatrix::from_vec(m, rank, grad_b)?,
        reconstruction: BinaryMatrix::from_vec(n, m, recon)?,
    })
}

/// Log-posterior of the factor parameters (log-likelihood plus Beta prior
/// terms, without the constant normalizer).
pub fn log_posterior(
    x: &ObservedMatrix,
    params: &FactorParams,
    noise: &NoiseModel,
    prior: &BetaPrior,
) -> Result<f64> {
    evaluate(x, params, noise, prior).map(|e| e.objective)
}

/// Gradients of [`log_posterior`] with respect to `A` and `B`.
pub fn gradients(
    x: &ObservedMatrix,
    params: &FactorParams,
    noise: &NoiseModel,
    prior: &BetaPrior,
) -> Result<(RealMatrix, RealMatrix)> {
    evaluate(x, params, noise, prior).map(|e| (e.grad_a, e.grad_b))
}

/// Likelihood gradients of the noise-free model, computed directly from the
/// clean probabilities: per observed cell the factor is `X/P - 1`, applied
/// through `mu zeta / (1 - mu zeta)`.
///
/// This is an independent route kept for cross-checking the flip-noise
/// gradient path at `eps = 0`; the two agree to near machine precision.
pub fn noise_free_ml_gradients(
    x: &ObservedMatrix,
    params: &FactorParams,
) -> Result<(RealMatrix, RealMatrix)> {
    let (n, m, rank) = (x.n_rows(), x.n_cols(), params.rank());
    if params.a().n_rows() != n || params.b().n_rows() != m {
        return Err(Error::DimensionMismatch(format!(
            "data {}x{} vs A {}x{}, B {}x{}",
            n,
            m,
            params.a().n_rows(),
            rank,
            params.b().n_rows(),
            params.b().n_cols()
        )));
    }
    let mu = params.mu();
    let zeta = params.zeta();
    let mut grad_a = vec![0.0; n * rank];
    let mut grad_b = vec![0.0; m * rank];
    for row in 0..n {
        let mu_row = mu.row(row);
        let ga_row = &mut grad_a[row * rank..(row + 1) * rank];
        for col in 0..m {
            if !x.is_observed(row, col) {
                continue;
            }
            let zeta_row = zeta.row(col);
            let mut q = 1.0;
            for k in 0..rank {
                q *= 1.0 - mu_row[k] * zeta_row[k];
            }
            let p = 1.0 - q;
            let r = if x.value(row, col) == 1 {
                1.0 / p.max(PROB_FLOOR) - 1.0
            } else {
                -1.0
            };
            let gb_row = &mut grad_b[col * rank..(col + 1) * rank];
            for k in 0..rank {
                let t = mu_row[k] * zeta_row[k];
                let shared = r * t / (1.0 - t);
                ga_row[k] += shared * (1.0 - mu_row[k]);
                gb_row[k] += shared * (1.0 - zeta_row[k]);
            }
        }
    }
    Ok((
        RealMatrix::from_vec(n, rank, grad_a)?,
        RealMatrix::from_vec(m, rank, grad_b)?,
    ))
}

/// Thresholded reconstruction: 1 where `P* >= 0.5`, else 0.
pub fn reconstruct(params: &FactorParams, noise: &NoiseModel) -> BinaryMatrix {
    let mu = params.mu();
    let zeta = params.zeta();
    let (n, m, rank) = (mu.n_rows(), zeta.n_rows(), params.rank());
    let eps = noise.epsilon();
    let mut out = BinaryMatrix::zeros(n, m);
    for row in 0..n {
        let mu_row = mu.row(row);
        for col in 0..m {
            let zeta_row = zeta.row(col);
            let mut q = 1.0;
            for k in 0..rank {
                q *= 1.0 - mu_row[k] * zeta_row[k];
            }
            let p = 1.0 - q;
            let p_star = (1.0 - eps) * p + eps * (1.0 - p);
            out.set(row, col, (p_star >= 0.5) as u8);
        }
    }
    out
}
