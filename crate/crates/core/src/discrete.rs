//! Finite domains: one-based bins, square kernel matrices and discrete
//! distributions over `[k]`.

use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiscreteError {
    #[error("bin {value} outside [1..{k}]")]
    BadBin { value: usize, k: usize },
    #[error("matrix data has {got} entries, expected {expected}")]
    NotSquare { expected: usize, got: usize },
    #[error("matrix must be at least 1x1")]
    EmptyMatrix,
    #[error("probability vector is invalid: {0}")]
    BadDistribution(String),
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// A bin index in `[1..k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bin(usize);

impl Bin {
    pub fn new(value: usize, k: usize) -> Result<Self, DiscreteError> {
        if value == 0 || value > k {
            return Err(DiscreteError::BadBin { value, k });
        }
        Ok(Bin(value))
    }

    /// Bin from a zero-based offset. Caller guarantees `index < k`.
    pub(crate) fn from_index(index: usize) -> Self {
        Bin(index + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position, for indexing into vectors and matrices.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense row-major `k x k` real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    k: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self, DiscreteError> {
        if k == 0 {
            return Err(DiscreteError::EmptyMatrix);
        }
        if data.len() != k * k {
            return Err(DiscreteError::NotSquare {
                expected: k * k,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiscreteError::NonFinite {
                row: pos / k,
                col: pos % k,
            });
        }
        Ok(Self { k, data })
    }

    /// Build from a function of zero-based `(row, col)`.
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(k > 0, "kernel matrix must be at least 1x1");
        let mut data = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                data.push(f(i, j));
            }
        }
        Self { k, data }
    }

    pub fn identity(k: usize) -> Self {
        Self::from_fn(k, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn constant(k: usize, c: f64) -> Self {
        Self::from_fn(k, |_, _| c)
    }

    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.k + col]
    }

    #[inline]
    pub fn at(&self, a: Bin, b: Bin) -> f64 {
        self.get(a.index(), b.index())
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.k..(row + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for i in 0..self.k {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.k).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.k);
        debug_assert_eq!(y.len(), self.k);
        x.iter()
            .enumerate()
            .filter(|(_, xi)| **xi != 0.0)
            .map(|(i, xi)| xi * self.row(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

/// Probability vector over `[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DiscreteError> {
        if probs.is_empty() {
            return Err(DiscreteError::BadDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DiscreteError::BadDistribution(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DiscreteError::BadDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    /// Draw `n` i.i.d. bins.
    pub fn sample_bins<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Bin> {
        let index = WeightedIndex::new(&self.probs).expect("validated distribution");
        (0..n).map(|_| Bin::from_index(index.sample(rng))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_one_based() {
        assert!(Bin::new(0, 4).is_err());
        assert!(Bin::new(5, 4).is_err());
        let b = Bin::new(4, 4).unwrap();
        assert_eq!(b.index(), 3);
        assert_eq!(b.get(), 4);
    }

    #[test]
    fn matrix_shape_checked() {
        assert_eq!(
            KernelMatrix::new(2, vec![1.0; 3]),
            Err(DiscreteError::NotSquare {
                expected: 4,
                got: 3
            })
        );
        assert!(KernelMatrix::new(0, vec![]).is_err());
        assert!(KernelMatrix::new(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn matrix_sums_and_bilinear() {
        let m = KernelMatrix::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.row_sums(), vec![3.0, 7.0]);
        assert_eq!(m.col_sums(), vec![4.0, 6.0]);
        assert_eq!(m.total(), 10.0);
        assert!(!m.is_symmetric(0.0));
        // [1, 1] A [1, 0]^T = 1 + 3
        assert_eq!(m.bilinear(&[1.0, 1.0], &[1.0, 0.0]), 4.0);
    }

    #[test]
    fn distribution_must_sum_to_one() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(DiscreteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }
}
