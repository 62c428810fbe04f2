//! Pairwise kernels, exact U-statistics and population moments on finite
//! domains.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{DiscreteDistribution, KernelMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel {kernel:?} cannot evaluate points of shape {shape}")]
    ShapeMismatch { kernel: KernelId, shape: &'static str },
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("class {0} is empty")]
    EmptyClass(Label),
    #[error("collision estimate {0} is not positive")]
    NonPositiveCollisionEstimate(f64),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("custom kernel needs a matrix and bin-valued scalar points")]
    MissingMatrix,
    #[error("point {0} is not a bin of the custom kernel matrix")]
    BadMatrixIndex(f64),
}

/// Public class label of a scored point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub score: u64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainPoint {
    Scalar(f64),
    Pair(f64, f64),
    Scored(ScoredPoint),
}

impl DomainPoint {
    fn shape(&self) -> &'static str {
        match self {
            DomainPoint::Scalar(_) => "scalar",
            DomainPoint::Pair(..) => "pair",
            DomainPoint::Scored(_) => "scored",
        }
    }
}

/// A homogeneous collection of user inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    Scalar(Vec<f64>),
    Bivariate(Vec<(f64, f64)>),
    Scored(Vec<ScoredPoint>),
}

impl Sample {
    pub fn len(&self) -> usize {
        match self {
            Sample::Scalar(v) => v.len(),
            Sample::Bivariate(v) => v.len(),
            Sample::Scored(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> DomainPoint {
        match self {
            Sample::Scalar(v) => DomainPoint::Scalar(v[i]),
            Sample::Bivariate(v) => DomainPoint::Pair(v[i].0, v[i].1),
            Sample::Scored(v) => DomainPoint::Scored(v[i]),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = DomainPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Class sizes `(n_plus, n_minus)` for a scored sample.
    pub fn class_sizes(&self) -> Option<(usize, usize)> {
        match self {
            Sample::Scored(v) => {
                let pos = v.iter().filter(|p| p.label == Label::Positive).count();
                Some((pos, v.len() - pos))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelId {
    Gini,
    KendallTau,
    Collision,
    AucIndicator,
    CustomMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub id: KernelId,
    pub value_range: (f64, f64),
    pub matrix: Option<KernelMatrix>,
}

impl Kernel {
    /// `|x - y|` on `[0, 1]`.
    pub fn gini() -> Self {
        Self::builtin(KernelId::Gini, (0.0, 1.0))
    }

    pub fn kendall_tau() -> Self {
        Self::builtin(KernelId::KendallTau, (-1.0, 1.0))
    }

    pub fn collision() -> Self {
        Self::builtin(KernelId::Collision, (0.0, 1.0))
    }

    /// Symmetrized AUC indicator: 1 when the pair is a correctly ordered
    /// (positive, negative) pair.
    pub fn auc_indicator() -> Self {
        Self::builtin(KernelId::AucIndicator, (0.0, 1.0))
    }

    /// Kernel on bins `1..=k` given by a matrix. Points are `Scalar(bin)`.
    pub fn custom(matrix: KernelMatrix) -> Self {
        let range = (matrix.min_value(), matrix.max_value());
        Self {
            id: KernelId::CustomMatrix,
            value_range: range,
            matrix: Some(matrix),
        }
    }

    fn builtin(id: KernelId, value_range: (f64, f64)) -> Self {
        Self {
            id,
            value_range,
            matrix: None,
        }
    }

    pub fn from_id(id: KernelId) -> Option<Self> {
        match id {
            KernelId::Gini => Some(Self::gini()),
            KernelId::KendallTau => Some(Self::kendall_tau()),
            KernelId::Collision => Some(Self::collision()),
            KernelId::AucIndicator => Some(Self::auc_indicator()),
            KernelId::CustomMatrix => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.matrix {
            Some(m) => m.is_symmetric(0.0),
            None => true,
        }
    }

    pub fn eval(&self, a: DomainPoint, b: DomainPoint) -> Result<f64, KernelError> {
        use DomainPoint::*;
        let mismatch = || KernelError::ShapeMismatch {
            kernel: self.id,
            shape: if a.shape() == b.shape() { a.shape() } else { "mixed" },
        };
        match (self.id, a, b) {
            (KernelId::Gini, Scalar(x), Scalar(y)) => Ok((x - y).abs()),
            (KernelId::KendallTau, Pair(y1, z1), Pair(y2, z2)) => {
                Ok(sgn(y1 - y2) * sgn(z1 - z2))
            }
            (KernelId::Collision, Scalar(x), Scalar(y)) => Ok(indicator(x == y)),
            (KernelId::AucIndicator, Scored(p), Scored(q)) => {
                let ds = p.score as i128 - q.score as i128;
                let dl = p.label.sign() - q.label.sign();
                Ok(indicator(ds.signum() * dl.signum() as i128 > 0))
            }
            (KernelId::CustomMatrix, Scalar(x), Scalar(y)) => {
                let m = self.matrix.as_ref().ok_or(KernelError::MissingMatrix)?;
                Ok(m.get(matrix_index(x, m.size())?, matrix_index(y, m.size())?))
            }
            _ => Err(mismatch()),
        }
    }

    /// Matrix of the kernel restricted to an enumerated finite domain.
    pub fn matrix_over(&self, domain: &[DomainPoint]) -> Result<KernelMatrix, KernelError> {
        let mut data = Vec::with_capacity(domain.len() * domain.len());
        for &a in domain {
            for &b in domain {
                data.push(self.eval(a, b)?);
            }
        }
        KernelMatrix::new(domain.len(), data).map_err(|_| KernelError::SizeMismatch {
            expected: 1,
            got: 0,
        })
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn matrix_index(x: f64, k: usize) -> Result<usize, KernelError> {
    if x.fract() == 0.0 && x >= 1.0 && x <= k as f64 {
        Ok(x as usize - 1)
    } else {
        Err(KernelError::BadMatrixIndex(x))
    }
}

/// Complete U-statistic of degree 2, by the double loop over pairs.
pub fn exact_ustat(kernel: &Kernel, sample: &Sample) -> Result<f64, KernelError> {
    let n = sample.len();
    if n < 2 {
        return Err(KernelError::TooFewPoints(n));
    }
    let points: Vec<DomainPoint> = sample.points().collect();
    let mut total = 0.0;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            total += kernel.eval(a, b)?;
        }
    }
    Ok(2.0 * total / (n as f64 * (n as f64 - 1.0)))
}

fn split_scores(sample: &Sample) -> Result<(Vec<u64>, Vec<u64>), KernelError> {
    let Sample::Scored(points) = sample else {
        return Err(KernelError::ShapeMismatch {
            kernel: KernelId::AucIndicator,
            shape: "non-scored",
        });
    };
    let (pos, neg): (Vec<&ScoredPoint>, Vec<&ScoredPoint>) =
        points.iter().partition(|p| p.label == Label::Positive);
    let pos: Vec<u64> = pos.iter().map(|p| p.score).collect();
    let neg: Vec<u64> = neg.iter().map(|p| p.score).collect();
    if pos.is_empty() {
        return Err(KernelError::EmptyClass(Label::Positive));
    }
    if neg.is_empty() {
        return Err(KernelError::EmptyClass(Label::Negative));
    }
    Ok((pos, neg))
}

/// Number of (positive, negative) pairs with a strictly larger positive score.
pub fn exact_uauc(sample: &Sample) -> Result<u128, KernelError> {
    let (pos, mut neg) = split_scores(sample)?;
    neg.sort_unstable();
    Ok(pos
        .iter()
        .map(|&s| neg.partition_point(|&t| t < s) as u128)
        .sum())
}

pub fn exact_auc(sample: &Sample) -> Result<f64, KernelError> {
    let (n_plus, n_minus) = sample.class_sizes().unwrap_or((0, 0));
    let uauc = exact_uauc(sample)?;
    Ok(uauc as f64 / (n_plus as f64 * n_minus as f64))
}

pub fn renyi2_entropy(collision_estimate: f64) -> Result<f64, KernelError> {
    if collision_estimate <= 0.0 || collision_estimate.is_nan() {
        return Err(KernelError::NonPositiveCollisionEstimate(collision_estimate));
    }
    Ok(-collision_estimate.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub u: f64,
    pub zeta1: f64,
    pub zeta2: f64,
}

pub fn population_moments(
    a: &KernelMatrix,
    dist: &DiscreteDistribution,
) -> Result<PopulationMoments, KernelError> {
    let k = a.size();
    if dist.size() != k {
        return Err(KernelError::SizeMismatch {
            expected: k,
            got: dist.size(),
        });
    }
    let d = dist.probs();
    let f1: Vec<f64> = (0..k)
        .map(|i| a.row(i).iter().zip(d).map(|(x, p)| x * p).sum())
        .collect();
    let u: f64 = f1.iter().zip(d).map(|(f, p)| f * p).sum();
    let zeta1 = f1.iter().zip(d).map(|(f, p)| p * (f - u).powi(2)).sum();
    let zeta2 = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| d[i] * d[j] * (a.get(i, j) - u).powi(2))
        .sum();
    Ok(PopulationMoments { u, zeta1, zeta2 })
}

pub fn ustat_variance(n: usize, zeta1: f64, zeta2: f64) -> Result<f64, KernelError> {
    if n < 2 {
        return Err(KernelError::TooFewPoints(n));
    }
    let nf = n as f64;
    Ok(2.0 / (nf * (nf - 1.0)) * (2.0 * (nf - 2.0) * zeta1 + zeta2))
}
