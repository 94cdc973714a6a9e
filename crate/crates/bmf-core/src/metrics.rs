//! Evaluation metrics: reconstruction error against clean ground truth and
//! held-out completion accuracy.

use crate::error::{Error, Result};
use crate::matrix::{hamming_fraction, BinaryMatrix, Mask, ObservedMatrix};

/// One evaluated run, as reported by the experiment harness.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub reconstruction_error: f64,
    pub completion_accuracy: Option<f64>,
    pub estimated_epsilon: f64,
    pub true_epsilon: Option<f64>,
    pub objective: f64,
}

/// Normalized Hamming distance over all N*M cells.
pub fn reconstruction_error(x_hat: &BinaryMatrix, x_clean: &BinaryMatrix) -> Result<f64> {
    if x_hat.n_rows() != x_clean.n_rows() || x_hat.n_cols() != x_clean.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            x_hat.n_rows(),
            x_hat.n_cols(),
            x_clean.n_rows(),
            x_clean.n_cols()
        )));
    }
    let total = x_hat.n_rows() * x_hat.n_cols();
    let wrong = x_hat
        .as_slice()
        .iter()
        .zip(x_clean.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / total as f64)
}

/// Agreement fraction of `x_hat` with the reference on the held-out cells.
///
/// Every held-out cell must be observed in the reference (the noiseless
/// ground truth for synthetic runs, the binarized ratings for real data).
pub fn completion_accuracy(
    x_hat: &BinaryMatrix,
    reference: &ObservedMatrix,
    heldout: &Mask,
) -> Result<f64> {
    if heldout.count() == 0 {
        return Err(Error::EmptyHoldout);
    }
    if !heldout.is_subset_of(reference.mask()) {
        return Err(Error::InvalidParameter(
            "held-out cells must be observed in the reference".into(),
        ));
    }
    Ok(1.0 - hamming_fraction(x_hat, reference.values(), heldout)?)
}
