//! k-ary randomized response on binned inputs and the debiased U-statistic
//! estimator over the randomized reports.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{Bin, DiscreteError, KernelMatrix};
use crate::kernels::Sample;
use crate::quantization::{QuantError, QuantScheme};

#[derive(Debug, Error)]
pub enum RrError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("k must be at least 1")]
    BadK,
    #[error(transparent)]
    BadBin(#[from] DiscreteError),
    #[error("matrix is {got}x{got}, protocol uses k = {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("need at least 2 reports, got {0}")]
    TooFewPoints(usize),
    #[error("sample is not a bin-valued scalar sample in [1..{0}]")]
    NotDiscrete(usize),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrConfig {
    k: usize,
    epsilon: f64,
}

impl RrConfig {
    /// `epsilon` may be infinite, which disables randomization.
    pub fn new(k: usize, epsilon: f64) -> Result<Self, RrError> {
        if k == 0 {
            return Err(RrError::BadK);
        }
        if !(epsilon > 0.0) {
            return Err(RrError::BadEpsilon(epsilon));
        }
        Ok(Self { k, epsilon })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Probability of replacing the input with a uniform draw over `[k]`.
    pub fn beta(&self) -> f64 {
        let k = self.k as f64;
        k / (k + self.epsilon.exp_m1())
    }

    /// Output distribution for a fixed input: `(P(true bin), P(each other bin))`.
    pub fn output_probs(&self) -> (f64, f64) {
        let beta = self.beta();
        let other = beta / self.k as f64;
        (1.0 - beta + other, other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrReport(pub Bin);

pub fn rr_randomize<R: Rng + ?Sized>(cfg: &RrConfig, input: Bin, rng: &mut R) -> Result<RrReport, RrError> {
    if input.get() > cfg.k {
        return Err(DiscreteError::BadBin {
            value: input.get(),
            k: cfg.k,
        }
        .into());
    }
    let beta = cfg.beta();
    if beta > 0.0 && rng.gen::<f64>() < beta {
        Ok(RrReport(Bin::from_index(rng.gen_range(0..cfg.k))))
    } else {
        Ok(RrReport(input))
    }
}

/// Debiased pair estimator with the row, column and total sums of `A`
/// precomputed.
#[derive(Debug, Clone)]
pub struct RrEstimator<'a> {
    matrix: &'a KernelMatrix,
    b: f64,
    scale: f64,
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    total: f64,
}

impl<'a> RrEstimator<'a> {
    pub fn new(cfg: &RrConfig, matrix: &'a KernelMatrix) -> Result<Self, RrError> {
        if matrix.size() != cfg.k {
            return Err(RrError::SizeMismatch {
                expected: cfg.k,
                got: matrix.size(),
            });
        }
        let beta = cfg.beta();
        Ok(Self {
            matrix,
            b: beta / cfg.k as f64,
            scale: (1.0 - beta).powi(-2),
            row_sums: matrix.row_sums(),
            col_sums: matrix.col_sums(),
            total: matrix.total(),
        })
    }

    /// `(1 - beta)^-2 (e_r1 - b)^T A (e_r2 - b)`.
    pub fn pair(&self, r1: RrReport, r2: RrReport) -> f64 {
        let (i, j) = (r1.0.index(), r2.0.index());
        self.scale
            * (self.matrix.get(i, j) - self.b * (self.row_sums[i] + self.col_sums[j])
                + self.b * self.b * self.total)
    }

    /// Average of [`pair`](Self::pair) over all unordered pairs of reports
    /// summarized by their histogram. `A` is assumed symmetric; otherwise
    /// this is the estimate for the symmetrized kernel.
    pub fn aggregate_counts(&self, counts: &RrCounts) -> Result<f64, RrError> {
        let n = counts.n();
        if n < 2 {
            return Err(RrError::TooFewPoints(n as usize));
        }
        let nf = n as f64;
        let c: Vec<f64> = counts.0.iter().map(|&m| m as f64 - nf * self.b).collect();
        let diag: f64 = counts
            .0
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0)
            .map(|(r, &m)| {
                let g = self.matrix.get(r, r) - self.b * (self.row_sums[r] + self.col_sums[r])
                    + self.b * self.b * self.total;
                m as f64 * g
            })
            .sum();
        Ok((self.matrix.bilinear(&c, &c) - diag) / (nf * (nf - 1.0)) * self.scale)
    }
}

pub fn debiased_pair_estimate(
    cfg: &RrConfig,
    matrix: &KernelMatrix,
    r1: RrReport,
    r2: RrReport,
) -> Result<f64, RrError> {
    Ok(RrEstimator::new(cfg, matrix)?.pair(r1, r2))
}

/// Report histogram; a mergeable summary of the reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrCounts(Vec<u64>);

impl RrCounts {
    pub fn new(k: usize) -> Self {
        Self(vec![0; k])
    }

    pub fn add(&mut self, report: RrReport) {
        self.0[report.0.index()] += 1;
    }

    pub fn merge(&mut self, other: &RrCounts) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn n(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

pub fn rr_aggregate(cfg: &RrConfig, matrix: &KernelMatrix, reports: &[RrReport]) -> Result<f64, RrError> {
    let est = RrEstimator::new(cfg, matrix)?;
    let mut counts = RrCounts::new(cfg.k);
    for r in reports {
        if r.0.get() > cfg.k {
            return Err(DiscreteError::BadBin {
                value: r.0.get(),
                k: cfg.k,
            }
            .into());
        }
        counts.add(*r);
    }
    est.aggregate_counts(&counts)
}

/// Rounds a `[0, 1]` scalar sample, or reads a scalar sample already holding
/// bins `1..=k`.
pub fn encode_sample(scheme: Option<&QuantScheme>, k: usize, sample: &Sample) -> Result<Vec<Bin>, RrError> {
    let Sample::Scalar(values) = sample else {
        return Err(RrError::NotDiscrete(k));
    };
    match scheme {
        Some(s) => values.iter().map(|&x| s.quantize(x).map_err(RrError::from)).collect(),
        None => values
            .iter()
            .map(|&x| {
                if x.fract() == 0.0 && x >= 1.0 && x <= k as f64 {
                    Ok(Bin::from_index(x as usize - 1))
                } else {
                    Err(RrError::NotDiscrete(k))
                }
            })
            .collect(),
    }
}

/// Randomizes each binned input and aggregates.
pub fn run_rr_on_bins<R: Rng + ?Sized>(
    cfg: &RrConfig,
    matrix: &KernelMatrix,
    inputs: &[Bin],
    rng: &mut R,
) -> Result<f64, RrError> {
    let est = RrEstimator::new(cfg, matrix)?;
    let mut counts = RrCounts::new(cfg.k);
    for &x in inputs {
        counts.add(rr_randomize(cfg, x, rng)?);
    }
    est.aggregate_counts(&counts)
}

pub fn run_rr_protocol<R: Rng + ?Sized>(
    cfg: &RrConfig,
    scheme: Option<&QuantScheme>,
    matrix: &KernelMatrix,
    sample: &Sample,
    rng: &mut R,
) -> Result<f64, RrError> {
    let bins = encode_sample(scheme, cfg.k, sample)?;
    run_rr_on_bins(cfg, matrix, &bins, rng)
}

/// AUC from randomized scores when labels are public: each class
/// randomizes its scores over `[k]` and the strict-order kernel is debiased
/// across the two independent report sets. Runs in `O(n + k)`.
pub fn rr_two_sample_auc<R: Rng + ?Sized>(
    cfg: &RrConfig,
    pos: &[Bin],
    neg: &[Bin],
    rng: &mut R,
) -> Result<f64, RrError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(RrError::TooFewPoints(pos.len().min(neg.len())));
    }
    let mut cp = RrCounts::new(cfg.k);
    let mut cm = RrCounts::new(cfg.k);
    for &x in pos {
        cp.add(rr_randomize(cfg, x, rng)?);
    }
    for &x in neg {
        cm.add(rr_randomize(cfg, x, rng)?);
    }
    Ok(two_sample_auc_from_counts(cfg, &cp, &cm))
}

pub fn two_sample_auc_from_counts(cfg: &RrConfig, pos: &RrCounts, neg: &RrCounts) -> f64 {
    let beta = cfg.beta();
    let b = beta / cfg.k as f64;
    let (np, nm) = (pos.n() as f64, neg.n() as f64);
    let mut below = 0.0;
    let mut total = 0.0;
    for (&p, &m) in pos.0.iter().zip(&neg.0) {
        total += (p as f64 - np * b) * below;
        below += m as f64 - nm * b;
    }
    total / ((1.0 - beta).powi(2) * np * nm)
}

/// Variance bound for kernels with values in `[0, 1]`.
pub fn rr_variance_bound(cfg: &RrConfig, n: usize) -> f64 {
    let beta = cfg.beta();
    let n = n as f64;
    let q = 1.0 - beta;
    1.0 / (n * q * q) + (1.0 + beta).powi(2) / (2.0 * n * (n - 1.0) * q.powi(4))
}
