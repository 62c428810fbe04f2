//! Synthetic datasets and their finite domains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::discrete::DiscreteDistribution;
use crate::kernels::{DomainPoint, Label, Sample, ScoredPoint};

/// Fixed-point discretization of a score in `[0, 1]` into `[0..d-1]`.
pub fn fixed_point(score: f64, d: u64) -> u64 {
    ((score * d as f64).floor().max(0.0) as u64).min(d - 1)
}

/// Real-valued positive score used by the `ithdigit` dataset.
pub const ITHDIGIT_POSITIVE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SyntheticSpec {
    /// All positives at `d - 1`, all negatives at 0.
    AucOne { d: u64, n_plus: usize, n_minus: usize },
    /// Scores uniform on `[0..d-1]` for both classes.
    Ur { d: u64, n_plus: usize, n_minus: usize },
    /// Positives at real score `1e-4`, negatives at 0, then discretized.
    IthDigit { d: u64, n_plus: usize, n_minus: usize },
    /// `n` i.i.d. bins `1..=k` from `dist`.
    Discrete { dist: DiscreteDistribution, n: usize },
    /// `n` i.i.d. pairs from a joint table over `ys x zs`, row-major.
    Grid {
        ys: Vec<f64>,
        zs: Vec<f64>,
        joint: DiscreteDistribution,
        n: usize,
    },
    /// `n` i.i.d. uniform reals on `[0, 1]`.
    Uniform { n: usize },
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadSpec(msg));
        match self {
            SyntheticSpec::AucOne { d, n_plus, n_minus }
            | SyntheticSpec::Ur { d, n_plus, n_minus }
            | SyntheticSpec::IthDigit { d, n_plus, n_minus } => {
                if !d.is_power_of_two() || *d < 2 {
                    return bad(format!("domain size {d} is not a power of two >= 2"));
                }
                if *n_plus == 0 || *n_minus == 0 {
                    return bad("both classes need at least one user".into());
                }
            }
            SyntheticSpec::Discrete { n, .. } | SyntheticSpec::Uniform { n } => {
                if *n == 0 {
                    return bad("n must be positive".into());
                }
            }
            SyntheticSpec::Grid { ys, zs, joint, n } => {
                if ys.len() * zs.len() != joint.size() {
                    return bad("joint table does not match the grid".into());
                }
                if *n == 0 {
                    return bad("n must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match self {
            SyntheticSpec::AucOne { n_plus, n_minus, .. }
            | SyntheticSpec::Ur { n_plus, n_minus, .. }
            | SyntheticSpec::IthDigit { n_plus, n_minus, .. } => n_plus + n_minus,
            SyntheticSpec::Discrete { n, .. }
            | SyntheticSpec::Grid { n, .. }
            | SyntheticSpec::Uniform { n } => *n,
        }
    }

    /// Score domain size for the AUC datasets.
    pub fn score_domain(&self) -> Option<u64> {
        match self {
            SyntheticSpec::AucOne { d, .. } | SyntheticSpec::Ur { d, .. } | SyntheticSpec::IthDigit { d, .. } => {
                Some(*d)
            }
            _ => None,
        }
    }

    /// Enumerated finite domain with the population probability of each
    /// point, when the data are i.i.d. from a finite distribution.
    pub fn population(&self) -> Option<(Vec<DomainPoint>, DiscreteDistribution)> {
        match self {
            SyntheticSpec::Discrete { dist, .. } => Some((
                (1..=dist.size()).map(|b| DomainPoint::Scalar(b as f64)).collect(),
                dist.clone(),
            )),
            SyntheticSpec::Grid { ys, zs, joint, .. } => Some((
                ys.iter()
                    .flat_map(|&y| zs.iter().map(move |&z| DomainPoint::Pair(y, z)))
                    .collect(),
                joint.clone(),
            )),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SyntheticSpec::AucOne { d, n_plus, n_minus } => format!("auc_one(d={d},n+={n_plus},n-={n_minus})"),
            SyntheticSpec::Ur { d, n_plus, n_minus } => format!("ur(d={d},n+={n_plus},n-={n_minus})"),
            SyntheticSpec::IthDigit { d, n_plus, n_minus } => {
                format!("ithdigit(d={d},n+={n_plus},n-={n_minus})")
            }
            SyntheticSpec::Discrete { dist, n } => format!("discrete(k={},n={n})", dist.size()),
            SyntheticSpec::Grid { ys, zs, n, .. } => format!("grid({}x{},n={n})", ys.len(), zs.len()),
            SyntheticSpec::Uniform { n } => format!("uniform(n={n})"),
        }
    }
}

fn scored(pos: impl Iterator<Item = u64>, neg: impl Iterator<Item = u64>) -> Sample {
    let p = pos.map(|score| ScoredPoint {
        score,
        label: Label::Positive,
    });
    let n = neg.map(|score| ScoredPoint {
        score,
        label: Label::Negative,
    });
    Sample::Scored(p.chain(n).collect())
}

pub fn auc_one(d: u64, n_plus: usize, n_minus: usize) -> Sample {
    scored(
        std::iter::repeat_n(d - 1, n_plus),
        std::iter::repeat_n(0, n_minus),
    )
}

pub fn generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Sample, HarnessError> {
    spec.validate()?;
    Ok(match spec {
        SyntheticSpec::AucOne { d, n_plus, n_minus } => auc_one(*d, *n_plus, *n_minus),
        SyntheticSpec::Ur { d, n_plus, n_minus } => {
            let pos: Vec<u64> = (0..*n_plus).map(|_| rng.gen_range(0..*d)).collect();
            let neg: Vec<u64> = (0..*n_minus).map(|_| rng.gen_range(0..*d)).collect();
            scored(pos.into_iter(), neg.into_iter())
        }
        SyntheticSpec::IthDigit { d, n_plus, n_minus } => scored(
            std::iter::repeat_n(fixed_point(ITHDIGIT_POSITIVE, *d), *n_plus),
            std::iter::repeat_n(fixed_point(0.0, *d), *n_minus),
        ),
        SyntheticSpec::Discrete { dist, n } => {
            Sample::Scalar(dist.sample_bins(*n, rng).iter().map(|b| b.get() as f64).collect())
        }
        SyntheticSpec::Grid { ys, zs, joint, n } => Sample::Bivariate(
            joint
                .sample_bins(*n, rng)
                .iter()
                .map(|b| (ys[b.index() / zs.len()], zs[b.index() % zs.len()]))
                .collect(),
        ),
        SyntheticSpec::Uniform { n } => Sample::Scalar((0..*n).map(|_| rng.gen::<f64>()).collect()),
    })
}

/// Ratings `0..=5` on both axes with `P(y, z)` proportional to
/// `exp(-1.2 |y - z|)`: a 36-point domain with strong positive association.
pub fn kendall_grid(n: usize) -> SyntheticSpec {
    let ratings: Vec<f64> = (0..6).map(f64::from).collect();
    let weights: Vec<f64> = ratings
        .iter()
        .flat_map(|&y| ratings.iter().map(move |&z| (-1.2 * (y - z).abs()).exp()))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    // Absorb rounding so the table sums to one within the validation tolerance.
    let drift: f64 = 1.0 - probs.iter().sum::<f64>();
    probs[0] += drift;
    SyntheticSpec::Grid {
        ys: ratings.clone(),
        zs: ratings,
        joint: DiscreteDistribution::new(probs).expect("normalized weights"),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::exact_auc;
    use crate::rng::substream;

    #[test]
    fn auc_one_layout() {
        let mut rng = substream(40, &[]);
        let s = generate(&SyntheticSpec::AucOne { d: 16, n_plus: 3, n_minus: 3 }, &mut rng).unwrap();
        let Sample::Scored(points) = &s else { panic!() };
        assert_eq!(points.iter().filter(|p| p.score == 15 && p.label == Label::Positive).count(), 3);
        assert_eq!(points.iter().filter(|p| p.score == 0 && p.label == Label::Negative).count(), 3);
        assert_eq!(exact_auc(&s), Ok(1.0));
    }

    #[test]
    fn ithdigit_resolution() {
        let mut rng = substream(41, &[]);
        let coarse = SyntheticSpec::IthDigit { d: 1 << 13, n_plus: 4, n_minus: 4 };
        assert_eq!(exact_auc(&generate(&coarse, &mut rng).unwrap()), Ok(0.0));
        let fine = SyntheticSpec::IthDigit { d: 1 << 14, n_plus: 4, n_minus: 4 };
        let s = generate(&fine, &mut rng).unwrap();
        assert_eq!(exact_auc(&s), Ok(1.0));
        let Sample::Scored(points) = &s else { panic!() };
        assert!(points.iter().all(|p| p.score == u64::from(p.label == Label::Positive)));
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SyntheticSpec::Ur { d: 64, n_plus: 20, n_minus: 20 };
        let a = generate(&spec, &mut substream(42, &[1])).unwrap();
        let b = generate(&spec, &mut substream(42, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_specs_rejected() {
        let mut rng = substream(43, &[]);
        assert!(generate(&SyntheticSpec::Ur { d: 12, n_plus: 1, n_minus: 1 }, &mut rng).is_err());
        assert!(generate(&SyntheticSpec::AucOne { d: 8, n_plus: 0, n_minus: 1 }, &mut rng).is_err());
    }

    #[test]
    fn grid_has_36_points() {
        let spec = kendall_grid(10);
        let (points, dist) = spec.population().unwrap();
        assert_eq!(points.len(), 36);
        assert!((dist.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
