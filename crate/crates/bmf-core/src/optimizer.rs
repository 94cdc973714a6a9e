//! Full-batch resilient propagation over the factor parameters.
//!
//! The update is the iRprop- variant: per-parameter step sizes grow by
//! `eta_plus` while the gradient sign is stable, shrink by `eta_minus` on a
//! sign flip (with the gradient treated as zero for that entry on the flip
//! iteration), and parameters move by `sign(gradient) * step` in the ascent
//! direction, clipped to `[-clip_bound, clip_bound]` after every update.
//!
//! The M-step iterates gradient evaluation and Rprop steps until the model
//! reconstruction (over all cells, observed or not) stops changing, or an
//! iteration cap is reached. Because Rprop does not guarantee monotone
//! objective ascent, the best-seen parameters are retained and returned.

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::model::{self, BetaPrior, FactorParams, NoiseModel};
use crate::matrix::ObservedMatrix;

/// Hyperparameters of the Rprop update and the M-step loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub clip_bound: f64,
    pub max_inner_iters: usize,
    /// Number of consecutive iterations the reconstruction must stay
    /// unchanged before the M-step is declared converged. A window of 1 is
    /// the bare same-as-previous-iteration criterion, which fires while the
    /// reconstruction is merely coasting through the early plateau; the
    /// default demands a longer stable stretch.
    pub stability_window: usize,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            step_init: 0.01,
            step_min: 1e-6,
            step_max: 1.0,
            clip_bound: 5.0,
            max_inner_iters: 2000,
            stability_window: 30,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_minus > 0.0 && self.eta_minus < 1.0 && self.eta_plus > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < eta_minus < 1 < eta_plus, got ({}, {})",
                self.eta_minus, self.eta_plus
            )));
        }
        if !(self.step_min > 0.0
            && self.step_min <= self.step_init
            && self.step_init <= self.step_max)
        {
            return Err(Error::InvalidParameter(format!(
                "need 0 < step_min <= step_init <= step_max, got ({}, {}, {})",
                self.step_min, self.step_init, self.step_max
            )));
        }
        if !self.clip_bound.is_finite() || self.clip_bound <= 0.0 {
            return Err(Error::InvalidParameter("clip_bound must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.stability_window == 0 {
            return Err(Error::InvalidParameter(
                "max_inner_iters and stability_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-parameter step sizes and previous gradient signs.
#[derive(Debug, Clone)]
pub struct RpropState {
    step_a: Vec<f64>,
    step_b: Vec<f64>,
    prev_sign_a: Vec<i8>,
    prev_sign_b: Vec<i8>,
}

impl RpropState {
    pub fn new(n_rows: usize, m_rows: usize, rank: usize, config: &RpropConfig) -> Self {
        Self {
            step_a: vec![config.step_init; n_rows * rank],
            step_b: vec![config.step_init; m_rows * rank],
            prev_sign_a: vec![0; n_rows * rank],
            prev_sign_b: vec![0; m_rows * rank],
        }
    }

    pub fn steps_a(&self) -> &[f64] {
        &self.step_a
    }

    pub fn steps_b(&self) -> &[f64] {
        &self.step_b
    }
}

#[inline]
fn update_entry(param: &mut f64, grad: f64, step: &mut f64, prev: &mut i8, config: &RpropConfig) {
    let mut sign: i8 = if grad > 0.0 {
        1
    } else if grad < 0.0 {
        -1
    } else {
        0
    };
    let change = i32::from(sign) * i32::from(*prev);
    if change > 0 {
        *step = (*step * config.eta_plus).min(config.step_max);
    } else if change < 0 {
        *step = (*step * config.eta_minus).max(config.step_min);
        sign = 0; // iRprop-: skip the update on a sign flip
    }
    if sign != 0 {
        *param = (*param + f64::from(sign) * *step).clamp(-config.clip_bound, config.clip_bound);
    }
    *prev = sign;
}

/// One Rprop ascent step over both factor matrices, in place.
pub fn rprop_step(
    params: &mut FactorParams,
    grad_a: &RealMatrix,
    grad_b: &RealMatrix,
    state: &mut RpropState,
    config: &RpropConfig,
) -> Result<()> {
    if grad_a.n_rows() != params.a().n_rows()
        || grad_a.n_cols() != params.rank()
        || grad_b.n_rows() != params.b().n_rows()
        || grad_b.n_cols() != params.rank()
        || state.step_a.len() != grad_a.as_slice().len()
        || state.step_b.len() != grad_b.as_slice().len()
    {
        return Err(Error::DimensionMismatch(
            "gradient/state shapes do not match the parameters".into(),
        ));
    }
    let a = params.a_mut().as_mut_slice();
    for (((param, &grad), step), prev) in a
        .iter_mut()
        .zip(grad_a.as_slice())
        .zip(&mut state.step_a)
        .zip(&mut state.prev_sign_a)
    {
        update_entry(param, grad, step, prev, config);
    }
    let b = params.b_mut().as_mut_slice();
    for (((param, &grad), step), prev) in b
        .iter_mut()
        .zip(grad_b.as_slice())
        .zip(&mut state.step_b)
        .zip(&mut state.prev_sign_b)
    {
        update_entry(param, grad, step, prev, config);
    }
    Ok(())
}

/// Whether the inner loop stopped on reconstruction stability or on the
/// iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MStepStatus {
    Converged,
    Capped,
}

#[derive(Debug, Clone)]
pub struct MStepResult {
    /// Best-seen parameters by objective (never worse than the entry state).
    pub params: FactorParams,
    /// Objective of the returned parameters.
    pub objective: f64,
    /// Rprop iterations actually run.
    pub iterations: usize,
    pub status: MStepStatus,
}

/// Optimize the factor parameters at fixed flip probability.
pub fn run_m_step(
    x: &ObservedMatrix,
    params: FactorParams,
    noise: &NoiseModel,
    prior: &BetaPrior,
    config: &RpropConfig,
) -> Result<MStepResult> {
    config.validate()?;
    let mut params = params;
    let mut state = RpropState::new(
        params.a().n_rows(),
        params.b().n_rows(),
        params.rank(),
        config,
    );

    let mut eval = model::evaluate(x, &params, noise, prior)?;
    let mut best_params = params.clone();
    let mut best_objective = eval.objective;
    let mut prev_recon = eval.reconstruction.clone();

    let mut stable = 0usize;
    let mut iterations = 0usize;
    let mut status = MStepStatus::Capped;

    for iter in 1..=config.max_inner_iters {
        rprop_step(&mut params, &eval.grad_a, &eval.grad_b, &mut state, config)?;
        eval = model::evaluate(x, &params, noise, prior)?;
        iterations = iter;
        if eval.objective > best_objective {
            best_objective = eval.objective;
            best_params = params.clone();
        }
        if eval.reconstruction == prev_recon {
            stable += 1;
            if stable >= config.stability_window {
                status = MStepStatus::Converged;
                break;
            }
        } else {
            stable = 0;
            prev_recon = eval.reconstruction.clone();
        }
    }

    Ok(MStepResult {
        params: best_params,
        objective: best_objective,
        iterations,
        status,
    })
}
