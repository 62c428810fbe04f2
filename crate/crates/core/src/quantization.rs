//! Rounding of `[0, 1]` inputs to `k` bins and quantized kernel matrices.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{Bin, KernelMatrix};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("input {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("bin centers must be strictly increasing within [0, 1]")]
    BadCenters,
    #[error("quantized kernel has no delta matrix")]
    MissingDeltaMatrix,
    #[error("histogram has {got} bins, kernel has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("bad quantized kernel csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rounding to the nearest of `k` bin centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    centers: Vec<f64>,
}

impl QuantScheme {
    /// Centers `(2l - 1) / 2k` for `l = 1..=k`.
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "need at least one bin");
        let kf = k as f64;
        Self {
            centers: (1..=k).map(|l| (2 * l - 1) as f64 / (2.0 * kf)).collect(),
        }
    }

    pub fn with_centers(centers: Vec<f64>) -> Result<Self, QuantError> {
        let in_range = centers.iter().all(|c| (0.0..=1.0).contains(c));
        let increasing = centers.windows(2).all(|w| w[0] < w[1]);
        if centers.is_empty() || !in_range || !increasing {
            return Err(QuantError::BadCenters);
        }
        Ok(Self { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Nearest center, ties toward the lower bin.
    pub fn quantize(&self, x: f64) -> Result<Bin, QuantError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(QuantError::OutOfDomain(x));
        }
        let hi = self.centers.partition_point(|&c| c < x);
        let idx = if hi == 0 {
            0
        } else if hi == self.k() || x - self.centers[hi - 1] <= self.centers[hi] - x {
            hi - 1
        } else {
            hi
        };
        Ok(Bin::from_index(idx))
    }

    /// Closed interval of inputs that round to bin `i` (zero-based).
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            0.0
        } else {
            0.5 * (self.centers[i - 1] + self.centers[i])
        };
        let hi = if i + 1 == self.k() {
            1.0
        } else {
            0.5 * (self.centers[i] + self.centers[i + 1])
        };
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantVariant {
    Midpoint,
    Average,
    ExactOnBins,
}

impl QuantVariant {
    fn as_str(self) -> &'static str {
        match self {
            QuantVariant::Midpoint => "midpoint",
            QuantVariant::Average => "average",
            QuantVariant::ExactOnBins => "exact-on-bins",
        }
    }
}

impl FromStr for QuantVariant {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midpoint" => Ok(QuantVariant::Midpoint),
            "average" => Ok(QuantVariant::Average),
            "exact-on-bins" => Ok(QuantVariant::ExactOnBins),
            other => Err(QuantError::Csv(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedKernel {
    pub matrix: KernelMatrix,
    pub variant: QuantVariant,
    pub delta: Option<KernelMatrix>,
}

/// Grid steps per bin edge used by the midpoint search.
pub const MIDPOINT_GRID: usize = 64;

fn grid(lo: f64, hi: f64, steps: usize) -> impl Iterator<Item = f64> {
    let width = hi - lo;
    (0..=steps).map(move |s| if s == steps { hi } else { lo + width * s as f64 / steps as f64 })
}

/// `A_ij = (max + min) / 2` of `f` over the cell pair, with
/// `delta_ij = (max - min)^2 / 4`.
pub fn midpoint_kernel<F>(f: F, scheme: &QuantScheme) -> QuantizedKernel
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let k = scheme.k();
    let cells: Vec<(f64, f64)> = (0..k * k)
        .into_par_iter()
        .map(|idx| {
            let (xl, xh) = scheme.cell(idx / k);
            let (yl, yh) = scheme.cell(idx % k);
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for x in grid(xl, xh, MIDPOINT_GRID) {
                for y in grid(yl, yh, MIDPOINT_GRID) {
                    let v = f(x, y);
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            (min, max)
        })
        .collect();
    let matrix = KernelMatrix::from_fn(k, |i, j| {
        let (min, max) = cells[i * k + j];
        0.5 * (max + min)
    });
    let delta = KernelMatrix::from_fn(k, |i, j| {
        let (min, max) = cells[i * k + j];
        0.25 * (max - min).powi(2)
    });
    QuantizedKernel {
        matrix,
        variant: QuantVariant::Midpoint,
        delta: Some(delta),
    }
}

/// Monte Carlo mean of `f` over uniform draws from each cell pair. Cell
/// `(i, j)` uses its own stream derived from `seed`.
pub fn average_kernel<F>(f: F, scheme: &QuantScheme, mc_samples: usize, seed: u64) -> QuantizedKernel
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    assert!(mc_samples >= 1, "need at least one Monte Carlo draw");
    let k = scheme.k();
    let cells: Vec<f64> = (0..k * k)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            let (xl, xh) = scheme.cell(i);
            let (yl, yh) = scheme.cell(j);
            let mut rng = substream(seed, &[i as u64, j as u64]);
            let total: f64 = (0..mc_samples)
                .map(|_| {
                    let x = xl + (xh - xl) * rng.gen::<f64>();
                    let y = yl + (yh - yl) * rng.gen::<f64>();
                    f(x, y)
                })
                .sum();
            total / mc_samples as f64
        })
        .collect();
    QuantizedKernel {
        matrix: KernelMatrix::from_fn(k, |i, j| cells[i * k + j]),
        variant: QuantVariant::Average,
        delta: None,
    }
}

/// `A_ij = f(c_i, c_j)` at the bin centers.
pub fn exact_on_bins<F: Fn(f64, f64) -> f64>(f: F, scheme: &QuantScheme) -> QuantizedKernel {
    let c = scheme.centers();
    QuantizedKernel {
        matrix: KernelMatrix::from_fn(scheme.k(), |i, j| f(c[i], c[j])),
        variant: QuantVariant::ExactOnBins,
        delta: None,
    }
}

/// Plug-in `sum_ij p_i p_j delta_ij` from a bin histogram.
pub fn estimate_delta(qk: &QuantizedKernel, counts: &[u64]) -> Result<f64, QuantError> {
    let delta = qk.delta.as_ref().ok_or(QuantError::MissingDeltaMatrix)?;
    if counts.len() != delta.size() {
        return Err(QuantError::SizeMismatch {
            expected: delta.size(),
            got: counts.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(QuantError::EmptyHistogram);
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(delta.bilinear(&p, &p))
}

pub fn recommended_k(n: usize, lipschitz: f64, epsilon: f64) -> usize {
    let k = (n as f64).powf(0.25) * (lipschitz * epsilon).sqrt();
    (k.round() as usize).max(1)
}

impl QuantizedKernel {
    /// Header `k,variant`, one line with those values, then `k` matrix rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), QuantError> {
        writeln!(out, "k,variant")?;
        writeln!(out, "{},{}", self.matrix.size(), self.variant.as_str())?;
        for i in 0..self.matrix.size() {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the matrix written by [`write_csv`](Self::write_csv). The delta
    /// matrix is not part of the format.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, QuantError> {
        let mut lines = input.lines();
        let mut next = || -> Result<String, QuantError> {
            lines
                .next()
                .ok_or_else(|| QuantError::Csv("unexpected end of input".into()))?
                .map_err(QuantError::from)
        };
        if next()?.trim() != "k,variant" {
            return Err(QuantError::Csv("missing k,variant header".into()));
        }
        let meta = next()?;
        let (k, variant) = meta
            .trim()
            .split_once(',')
            .ok_or_else(|| QuantError::Csv("bad k,variant line".into()))?;
        let k: usize = k.parse().map_err(|_| QuantError::Csv(format!("bad k {k:?}")))?;
        let variant: QuantVariant = variant.parse()?;
        let mut data = Vec::with_capacity(k * k);
        for row in 0..k {
            let line = next()?;
            let before = data.len();
            for cell in line.trim().split(',') {
                data.push(
                    cell.parse::<f64>()
                        .map_err(|_| QuantError::Csv(format!("row {}: bad value {cell:?}", row + 1)))?,
                );
            }
            if data.len() - before != k {
                return Err(QuantError::Csv(format!("row {} has wrong length", row + 1)));
            }
        }
        let matrix = KernelMatrix::new(k, data).map_err(|e| QuantError::Csv(e.to_string()))?;
        Ok(Self {
            matrix,
            variant,
            delta: None,
        })
    }
}
