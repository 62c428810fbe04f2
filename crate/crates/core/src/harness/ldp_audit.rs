//! Exact privacy loss of local randomizers by enumerating their output
//! distributions.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::freq_oracle::hadamard::{hadamard_sign, keep_probability};
use crate::rr_protocol::RrConfig;

/// Largest k-ary RR domain the audit enumerates.
pub const MAX_RR_K: usize = 64;
/// Largest Hadamard level width (bits) the audit enumerates.
pub const MAX_HADAMARD_BITS: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mechanism")]
pub enum Randomizer {
    KaryRr { k: usize, epsilon: f64 },
    Hadamard { bits: u8, epsilon: f64 },
    /// Reports the input unchanged; never private.
    Identity { k: usize },
}

impl Randomizer {
    /// Budget the randomizer is configured with, if any.
    pub fn nominal_epsilon(&self) -> Option<f64> {
        match *self {
            Randomizer::KaryRr { epsilon, .. } | Randomizer::Hadamard { epsilon, .. } => Some(epsilon),
            Randomizer::Identity { .. } => None,
        }
    }

    /// Row `x` holds `P(output = o | input = x)` over an enumeration of the
    /// outputs.
    pub fn output_distributions(&self) -> Result<Vec<Vec<f64>>, HarnessError> {
        match *self {
            Randomizer::KaryRr { k, epsilon } => {
                if k > MAX_RR_K {
                    return Err(HarnessError::TooLargeToEnumerate(format!("k = {k}")));
                }
                let cfg = RrConfig::new(k, epsilon)?;
                let (same, other) = cfg.output_probs();
                Ok((0..k)
                    .map(|x| (0..k).map(|o| if o == x { same } else { other }).collect())
                    .collect())
            }
            Randomizer::Hadamard { bits, epsilon } => {
                if bits > MAX_HADAMARD_BITS {
                    return Err(HarnessError::TooLargeToEnumerate(format!("{bits} bits")));
                }
                if !(epsilon > 0.0) {
                    return Err(HarnessError::BadSpec(format!("epsilon must be positive, got {epsilon}")));
                }
                let size = 1u64 << bits;
                let keep = keep_probability(epsilon);
                let uniform = 1.0 / size as f64;
                // Outputs are (j, bit) flattened as 2j + bit.
                Ok((0..size)
                    .map(|q| {
                        (0..size)
                            .flat_map(|j| {
                                let truth_positive = hadamard_sign(j, q) > 0;
                                [false, true].map(|positive| {
                                    uniform * if positive == truth_positive { keep } else { 1.0 - keep }
                                })
                            })
                            .collect()
                    })
                    .collect())
            }
            Randomizer::Identity { k } => {
                if k > MAX_RR_K {
                    return Err(HarnessError::TooLargeToEnumerate(format!("k = {k}")));
                }
                Ok((0..k).map(|x| (0..k).map(|o| f64::from(u8::from(o == x))).collect()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpAudit {
    pub epsilon_claimed: f64,
    /// `max over x, x', o of ln P(o | x) / P(o | x')`.
    pub epsilon_actual: f64,
    pub pass: bool,
}

/// Worst-case log-likelihood ratio over all input pairs and outputs,
/// compared against `epsilon_claimed`.
pub fn verify_ldp(randomizer: &Randomizer, epsilon_claimed: f64) -> Result<LdpAudit, HarnessError> {
    let rows = randomizer.output_distributions()?;
    let outputs = rows.first().map_or(0, Vec::len);
    let mut worst = 0.0f64;
    for o in 0..outputs {
        let column = rows.iter().map(|r| r[o]);
        let hi = column.clone().fold(0.0f64, f64::max);
        let lo = column.fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            worst = worst.max(if lo > 0.0 { (hi / lo).ln() } else { f64::INFINITY });
        }
    }
    Ok(LdpAudit {
        epsilon_claimed,
        epsilon_actual: worst,
        pass: worst <= epsilon_claimed + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_loss_equals_epsilon() {
        for (k, eps) in [(2, 0.1), (3, 1.0986122886681098), (10, 2.0), (64, 5.0)] {
            let audit = verify_ldp(&Randomizer::KaryRr { k, epsilon: eps }, eps).unwrap();
            assert!((audit.epsilon_actual - eps).abs() < 1e-9, "{k} {eps}: {audit:?}");
            assert!(audit.pass);
        }
    }

    #[test]
    fn hadamard_loss_equals_epsilon() {
        for bits in 0..=MAX_HADAMARD_BITS {
            let audit = verify_ldp(&Randomizer::Hadamard { bits, epsilon: 1.5 }, 1.5).unwrap();
            if bits == 0 {
                // A single input has nothing to compare against.
                assert_eq!(audit.epsilon_actual, 0.0);
            } else {
                assert!((audit.epsilon_actual - 1.5).abs() < 1e-9);
            }
            assert!(audit.pass);
        }
    }

    #[test]
    fn rows_are_distributions() {
        for r in [
            Randomizer::KaryRr { k: 7, epsilon: 0.3 },
            Randomizer::Hadamard { bits: 3, epsilon: 0.3 },
            Randomizer::Identity { k: 4 },
        ] {
            for row in r.output_distributions().unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_fails_and_large_domains_refused() {
        let audit = verify_ldp(&Randomizer::Identity { k: 3 }, 10.0).unwrap();
        assert_eq!(audit.epsilon_actual, f64::INFINITY);
        assert!(!audit.pass);
        let loose = verify_ldp(&Randomizer::KaryRr { k: 4, epsilon: 2.0 }, 1.0).unwrap();
        assert!(!loose.pass);
        assert!(matches!(
            verify_ldp(&Randomizer::KaryRr { k: 65, epsilon: 1.0 }, 1.0),
            Err(HarnessError::TooLargeToEnumerate(_))
        ));
        assert!(matches!(
            verify_ldp(&Randomizer::Hadamard { bits: 7, epsilon: 1.0 }, 1.0),
            Err(HarnessError::TooLargeToEnumerate(_))
        ));
    }
}
