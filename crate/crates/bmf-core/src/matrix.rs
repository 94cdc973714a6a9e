//! Dense matrices and the observation mask.
//!
//! Storage is dense row-major throughout; the experiment scales used here
//! (up to a few thousand rows/columns) fit in memory, and the full-batch
//! gradients touch every observed entry anyway. The mask is an explicit
//! bitset aligned with the value buffer; missing entries store value 0 but
//! are never read.

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Build from a row-major buffer. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{}={} entries, got {}",
                n_rows,
                n_cols,
                n_rows * n_cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(format!("non-finite entry {v}")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.data[row * self.n_cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Dense row-major matrix with entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0; n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{}={} entries, got {}",
                n_rows,
                n_cols,
                n_rows * n_cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParameter(format!(
                "binary matrix entry {v} is not 0 or 1"
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        debug_assert!(value <= 1);
        self.data[row * self.n_cols + col] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// Observation mask: one bit per cell, aligned row-major with the matrix it
/// annotates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n_rows: usize,
    n_cols: usize,
    words: Vec<u64>,
}

impl Mask {
    /// All cells observed.
    pub fn full(n_rows: usize, n_cols: usize) -> Self {
        let mut mask = Self::empty(n_rows, n_cols);
        for w in &mut mask.words {
            *w = u64::MAX;
        }
        mask.clear_tail();
        mask
    }

    /// No cells observed.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        let bits = n_rows * n_cols;
        Self {
            n_rows,
            n_cols,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    fn clear_tail(&mut self) {
        let bits = self.n_rows * self.n_cols;
        if !bits.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (bits % 64)) - 1;
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn is_set(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        let idx = row * self.n_cols + col;
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, observed: bool) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        let idx = row * self.n_cols + col;
        if observed {
            self.words[idx / 64] |= 1u64 << (idx % 64);
        } else {
            self.words[idx / 64] &= !(1u64 << (idx % 64));
        }
    }

    /// Number of observed cells.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Mask selecting exactly the cells this one does not.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.clear_tail();
        out
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }
}

/// Binary observations with a per-entry observation mask. Missing entries
/// carry no value; constructors zero them so equality and serialization are
/// insensitive to whatever the caller left behind the mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedMatrix {
    values: BinaryMatrix,
    mask: Mask,
}

impl ObservedMatrix {
    pub fn new(mut values: BinaryMatrix, mask: Mask) -> Result<Self> {
        if values.n_rows() != mask.n_rows() || values.n_cols() != mask.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "values {}x{} vs mask {}x{}",
                values.n_rows(),
                values.n_cols(),
                mask.n_rows(),
                mask.n_cols()
            )));
        }
        if values.n_rows() == 0 || values.n_cols() == 0 {
            return Err(Error::InvalidParameter(
                "matrix must have at least one row and one column".into(),
            ));
        }
        for row in 0..values.n_rows() {
            for col in 0..values.n_cols() {
                if !mask.is_set(row, col) {
                    values.set(row, col, 0);
                }
            }
        }
        Ok(Self { values, mask })
    }

    pub fn fully_observed(values: BinaryMatrix) -> Result<Self> {
        let mask = Mask::full(values.n_rows(), values.n_cols());
        Self::new(values, mask)
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.n_cols()
    }

    pub fn values(&self) -> &BinaryMatrix {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask.is_set(row, col)
    }

    /// Value of an observed cell.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> u8 {
        debug_assert!(self.is_observed(row, col), "read of a missing entry");
        self.values.get(row, col)
    }

    pub fn observed_count(&self) -> usize {
        self.mask.count()
    }
}

/// Fraction of observed cells on which `a` and `b` disagree.
pub fn hamming_fraction(a: &BinaryMatrix, b: &BinaryMatrix, mask: &Mask) -> Result<f64> {
    if a.n_rows() != b.n_rows()
        || a.n_cols() != b.n_cols()
        || a.n_rows() != mask.n_rows()
        || a.n_cols() != mask.n_cols()
    {
        return Err(Error::DimensionMismatch(format!(
            "a {}x{}, b {}x{}, mask {}x{}",
            a.n_rows(),
            a.n_cols(),
            b.n_rows(),
            b.n_cols(),
            mask.n_rows(),
            mask.n_cols()
        )));
    }
    let observed = mask.count();
    if observed == 0 {
        return Err(Error::EmptyMask);
    }
    let mut disagreements = 0usize;
    for row in 0..a.n_rows() {
        for col in 0..a.n_cols() {
            if mask.is_set(row, col) && a.get(row, col) != b.get(row, col) {
                disagreements += 1;
            }
        }
    }
    Ok(disagreements as f64 / observed as f64)
}

/// Fraction of observed entries equal to 1.
pub fn density(x: &ObservedMatrix) -> Result<f64> {
    let observed = x.observed_count();
    if observed == 0 {
        return Err(Error::EmptyMask);
    }
    let mut ones = 0usize;
    for row in 0..x.n_rows() {
        for col in 0..x.n_cols() {
            if x.is_observed(row, col) && x.value(row, col) == 1 {
                ones += 1;
            }
        }
    }
    Ok(ones as f64 / observed as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_of(n: usize, m: usize, bits: &[u8]) -> BinaryMatrix {
        BinaryMatrix::from_vec(n, m, bits.to_vec()).unwrap()
    }

    #[test]
    fn hamming_identical_matrices_is_zero() {
        let a = matrix_of(3, 4, &[1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 1]);
        let mask = Mask::full(3, 4);
        assert_eq!(hamming_fraction(&a, &a, &mask).unwrap(), 0.0);
    }

    #[test]
    fn hamming_counts_disagreements_over_observed() {
        // 100 observed entries, 3 disagreements -> 0.03.
        let a = BinaryMatrix::zeros(10, 10);
        let mut b = BinaryMatrix::zeros(10, 10);
        b.set(0, 0, 1);
        b.set(3, 7, 1);
        b.set(9, 9, 1);
        let mask = Mask::full(10, 10);
        assert_eq!(hamming_fraction(&a, &b, &mask).unwrap(), 0.03);
    }

    #[test]
    fn hamming_complement_is_one() {
        let a = matrix_of(2, 3, &[1, 0, 1, 0, 1, 0]);
        let b = matrix_of(2, 3, &[0, 1, 0, 1, 0, 1]);
        let mask = Mask::full(2, 3);
        assert_eq!(hamming_fraction(&a, &b, &mask).unwrap(), 1.0);
    }

    #[test]
    fn hamming_rejects_empty_mask_and_bad_dims() {
        let a = BinaryMatrix::zeros(2, 2);
        assert!(matches!(
            hamming_fraction(&a, &a, &Mask::empty(2, 2)),
            Err(Error::EmptyMask)
        ));
        let b = BinaryMatrix::zeros(2, 3);
        assert!(matches!(
            hamming_fraction(&a, &b, &Mask::full(2, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn density_examples() {
        let ones = matrix_of(10, 10, &[1; 100]);
        let x = ObservedMatrix::fully_observed(ones).unwrap();
        assert_eq!(density(&x).unwrap(), 1.0);

        let zeros = BinaryMatrix::zeros(10, 10);
        let x = ObservedMatrix::fully_observed(zeros).unwrap();
        assert_eq!(density(&x).unwrap(), 0.0);

        let mut half = BinaryMatrix::zeros(4, 4);
        for k in 0..8 {
            half.set(k / 4, k % 4, 1);
        }
        let x = ObservedMatrix::fully_observed(half).unwrap();
        assert_eq!(density(&x).unwrap(), 0.5);
    }

    #[test]
    fn density_ignores_masked_zeros() {
        // Masking zero cells while keeping every observed one cannot lower
        // the reported density.
        let values = matrix_of(2, 2, &[1, 0, 0, 1]);
        let full = ObservedMatrix::fully_observed(values.clone()).unwrap();
        let mut mask = Mask::full(2, 2);
        mask.set(0, 1, false);
        let masked = ObservedMatrix::new(values, mask).unwrap();
        assert!(density(&masked).unwrap() >= density(&full).unwrap());
    }

    #[test]
    fn observed_matrix_zeroes_missing_values() {
        let values = matrix_of(1, 3, &[1, 1, 1]);
        let mut mask = Mask::full(1, 3);
        mask.set(0, 1, false);
        let x = ObservedMatrix::new(values, mask).unwrap();
        assert_eq!(x.values().get(0, 1), 0);
        assert_eq!(x.observed_count(), 2);
    }

    #[test]
    fn mask_complement_partitions_cells() {
        let mut mask = Mask::empty(5, 13);
        mask.set(0, 0, true);
        mask.set(4, 12, true);
        mask.set(2, 6, true);
        let comp = mask.complement();
        assert_eq!(mask.count() + comp.count(), 65);
        for row in 0..5 {
            for col in 0..13 {
                assert_ne!(mask.is_set(row, col), comp.is_set(row, col));
            }
        }
    }
}
