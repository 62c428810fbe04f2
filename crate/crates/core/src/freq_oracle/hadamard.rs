//! One-bit Hadamard local randomizer and its debiased count estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OracleError;

/// Largest supported level width in bits.
pub const MAX_BITS: u8 = 62;

/// Unnormalized Hadamard entry `(-1)^<j, q>`.
#[inline]
pub fn hadamard_sign(j: u64, q: u64) -> i8 {
    if (j & q).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Probability of reporting the true Hadamard entry.
pub fn keep_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + (-epsilon).exp())
}

/// `(e^eps + 1) / (e^eps - 1)`, written to stay finite for large `eps`.
pub fn debias_factor(epsilon: f64) -> f64 {
    let t = (-epsilon).exp();
    (1.0 + t) / (1.0 - t)
}

/// Public index `j` and one private bit. `z = sign * 2^(-l/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HadamardReport {
    pub j: u64,
    pub positive: bool,
}

impl HadamardReport {
    pub fn sign(self) -> i8 {
        if self.positive {
            1
        } else {
            -1
        }
    }

    pub fn z(self, bits: u8) -> f64 {
        self.sign() as f64 * (-(bits as f64) / 2.0).exp2()
    }
}

/// Wire form of one user's report: the tree level, the public index and the
/// private bit (`true` for `+1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u8,
    pub j: u64,
    pub z_sign: bool,
}

impl LevelReport {
    pub fn new(level: u8, report: HadamardReport) -> Self {
        Self {
            level,
            j: report.j,
            z_sign: report.positive,
        }
    }

    pub fn report(self) -> HadamardReport {
        HadamardReport {
            j: self.j,
            positive: self.z_sign,
        }
    }
}

fn check_index(bits: u8, q: u64) -> Result<(), OracleError> {
    if bits > MAX_BITS {
        return Err(OracleError::TooManyBits(bits));
    }
    if q >> bits != 0 {
        return Err(OracleError::BadIndex { index: q, bits });
    }
    Ok(())
}

pub fn local_randomize<R: Rng + ?Sized>(
    bits: u8,
    epsilon: f64,
    q: u64,
    rng: &mut R,
) -> Result<HadamardReport, OracleError> {
    check_index(bits, q)?;
    let j = if bits == 0 { 0 } else { rng.gen_range(0..1u64 << bits) };
    let truthful = rng.gen::<f64>() < keep_probability(epsilon);
    let y_positive = hadamard_sign(j, q) > 0;
    Ok(HadamardReport {
        j,
        positive: y_positive == truthful,
    })
}

/// Server-side state for one level. Reports are kept as signed sums per `j`
/// when the domain is no larger than the number of reports, and as a raw list
/// otherwise, so a query costs `min(n_l, 2^l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    bits: u8,
    epsilon: f64,
    n: u64,
    store: Store,
}

#[derive(Debug, Clone, PartialEq)]
enum Store {
    Dense(Vec<i64>),
    Sparse(Vec<HadamardReport>),
}

impl OracleState {
    pub fn from_reports(bits: u8, epsilon: f64, reports: Vec<HadamardReport>) -> Result<Self, OracleError> {
        if bits > MAX_BITS {
            return Err(OracleError::TooManyBits(bits));
        }
        if let Some(r) = reports.iter().find(|r| r.j >> bits != 0) {
            return Err(OracleError::BadIndex { index: r.j, bits });
        }
        let n = reports.len() as u64;
        let dense = bits < 32 && (1u64 << bits) <= n;
        let store = if dense {
            let mut sums = vec![0i64; 1 << bits];
            for r in &reports {
                sums[r.j as usize] += r.sign() as i64;
            }
            Store::Dense(sums)
        } else {
            Store::Sparse(reports)
        };
        Ok(Self { bits, epsilon, n, store })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Unbiased estimate of the number of users holding `q`.
    ///
    /// Each report contributes `y z` with `y = 2^(-l/2) (-1)^<j, q>`; the sum
    /// is rescaled by `2^l` so that its expectation is the count itself.
    pub fn estimate_count(&self, q: u64) -> Result<f64, OracleError> {
        check_index(self.bits, q)?;
        let signed: i64 = match &self.store {
            Store::Dense(sums) => sums
                .iter()
                .enumerate()
                .map(|(j, &s)| s * hadamard_sign(j as u64, q) as i64)
                .sum(),
            Store::Sparse(reports) => reports
                .iter()
                .map(|r| (r.sign() * hadamard_sign(r.j, q)) as i64)
                .sum(),
        };
        Ok(debias_factor(self.epsilon) * signed as f64)
    }
}

/// Upper bound on the oracle MSE quoted for this construction:
/// `4 n e^eps / (e^eps - 1)^2`.
pub fn oracle_mse_bound(n: u64, epsilon: f64) -> f64 {
    if n == 0 || epsilon.is_infinite() {
        return 0.0;
    }
    4.0 * n as f64 * epsilon.exp() / epsilon.exp_m1().powi(2)
}

/// Exact worst-case variance of [`OracleState::estimate_count`] over `n`
/// reports: each report has second moment `c^2` with `c` the debias factor,
/// so the variance is `n c^2 - count <= n c^2`.
pub fn oracle_variance_bound(n: u64, epsilon: f64) -> f64 {
    n as f64 * debias_factor(epsilon).powi(2)
}
