//! Pair subsampling with perturbed pairwise kernel evaluations.
//!
//! The pairwise evaluation is a trusted function of the two inputs whose
//! output is perturbed before release. A cryptographic two-party backend
//! would replace [`perturb_pair`].

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{DomainPoint, Kernel, KernelError, Sample};

#[derive(Debug, Error)]
pub enum PairError {
    #[error("pair sampling needs an even number of users, got {0}")]
    OddN(usize),
    #[error("need at least 2 users and P >= 1")]
    TooSmall,
    #[error("kernel value {value} outside [{lo}, {hi}]")]
    RangeViolation { value: f64, lo: f64, hi: f64 },
    #[error("binary randomized response needs a two-valued kernel, got {0}")]
    NotBinary(f64),
    #[error("expected {expected} noisy values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPair {
    pub i: usize,
    pub j: usize,
    pub perm: usize,
}

/// Pairs of adjacent positions in `P` permutations of the users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    n: usize,
    p: usize,
    pairs: Vec<PlannedPair>,
}

impl PairPlan {
    /// Plan from explicit zero-based permutations of `0..n`.
    pub fn from_permutations(perms: &[Vec<usize>]) -> Result<Self, PairError> {
        let n = perms.first().map_or(0, Vec::len);
        if perms.is_empty() || n < 2 {
            return Err(PairError::TooSmall);
        }
        if n % 2 == 1 {
            return Err(PairError::OddN(n));
        }
        let pairs = perms
            .iter()
            .enumerate()
            .flat_map(|(perm, sigma)| {
                sigma.chunks_exact(2).map(move |w| PlannedPair {
                    i: w[0],
                    j: w[1],
                    perm,
                })
            })
            .collect();
        Ok(Self {
            n,
            p: perms.len(),
            pairs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn pairs(&self) -> &[PlannedPair] {
        &self.pairs
    }

    /// Number of pairs each user appears in.
    pub fn appearances(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for pair in &self.pairs {
            counts[pair.i] += 1;
            counts[pair.j] += 1;
        }
        counts
    }

    /// CSV with header `pair_id,i,j,perm_id`; user indices are zero-based
    /// input rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PairError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair_id", "i", "j", "perm_id"])
            .map_err(csv_io)?;
        for (id, pair) in self.pairs.iter().enumerate() {
            w.serialize((id, pair.i, pair.j, pair.perm)).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> PairError {
    PairError::Io(std::io::Error::other(e))
}

pub fn sample_pairs<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<PairPlan, PairError> {
    if n % 2 == 1 {
        return Err(PairError::OddN(n));
    }
    if n < 2 || p == 0 {
        return Err(PairError::TooSmall);
    }
    let perms: Vec<Vec<usize>> = (0..p)
        .map(|_| {
            let mut sigma: Vec<usize> = (0..n).collect();
            sigma.shuffle(rng);
            sigma
        })
        .collect();
    PairPlan::from_permutations(&perms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Laplace,
    Rr2,
}

/// Output perturbation for one pair evaluation, calibrated so that every
/// user, who appears in `P` pairs, gets `epsilon` overall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    Laplace { scale: f64 },
    Rr2 { flip: f64 },
}

impl Perturbation {
    pub fn calibrate(kind: MechanismKind, epsilon: f64, p: usize, range: (f64, f64)) -> Result<Self, PairError> {
        if !(epsilon > 0.0) {
            return Err(PairError::BadEpsilon(epsilon));
        }
        let per_pair = epsilon / p as f64;
        Ok(match kind {
            MechanismKind::Laplace => Perturbation::Laplace {
                scale: (range.1 - range.0) / per_pair,
            },
            MechanismKind::Rr2 => Perturbation::Rr2 {
                flip: 1.0 / (1.0 + per_pair.exp()),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyKernelValue {
    pub value: f64,
    pub perturbation: Perturbation,
    pub range: (f64, f64),
}

impl NoisyKernelValue {
    /// Unbiased estimate of the kernel value.
    pub fn debiased(&self) -> f64 {
        match self.perturbation {
            Perturbation::Laplace { .. } => self.value,
            Perturbation::Rr2 { flip } => {
                let (lo, hi) = self.range;
                let bit = if self.value == hi { 1.0 } else { 0.0 };
                lo + (hi - lo) * (bit - flip) / (1.0 - 2.0 * flip)
            }
        }
    }
}

/// Laplace draw by inverse CDF.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}

pub fn perturb_value<R: Rng + ?Sized>(
    f: f64,
    range: (f64, f64),
    perturbation: Perturbation,
    rng: &mut R,
) -> Result<NoisyKernelValue, PairError> {
    let (lo, hi) = range;
    let value = match perturbation {
        Perturbation::Laplace { scale } => {
            if !(lo..=hi).contains(&f) {
                return Err(PairError::RangeViolation { value: f, lo, hi });
            }
            f + laplace(scale, rng)
        }
        Perturbation::Rr2 { flip } => {
            if f != lo && f != hi {
                return Err(PairError::NotBinary(f));
            }
            let flipped = flip > 0.0 && rng.gen::<f64>() < flip;
            match (f == hi, flipped) {
                (true, false) | (false, true) => hi,
                _ => lo,
            }
        }
    };
    Ok(NoisyKernelValue {
        value,
        perturbation,
        range,
    })
}

pub fn perturb_pair<R: Rng + ?Sized>(
    kernel: &Kernel,
    xi: DomainPoint,
    xj: DomainPoint,
    perturbation: Perturbation,
    rng: &mut R,
) -> Result<NoisyKernelValue, PairError> {
    perturb_value(kernel.eval(xi, xj)?, kernel.value_range, perturbation, rng)
}

pub fn aggregate_pairs(plan: &PairPlan, noisy: &[NoisyKernelValue]) -> Result<f64, PairError> {
    if noisy.len() != plan.pairs.len() {
        return Err(PairError::LengthMismatch {
            expected: plan.pairs.len(),
            got: noisy.len(),
        });
    }
    let total: f64 = noisy.iter().map(NoisyKernelValue::debiased).sum();
    Ok(2.0 * total / (plan.p * plan.n) as f64)
}

/// Samples a plan, perturbs each pair evaluation and aggregates. An odd
/// trailing user is dropped.
pub fn run_pairs_protocol<R: Rng + ?Sized>(
    kernel: &Kernel,
    sample: &Sample,
    p: usize,
    epsilon: f64,
    kind: MechanismKind,
    rng: &mut R,
) -> Result<f64, PairError> {
    let n = sample.len() - sample.len() % 2;
    let plan = sample_pairs(n, p, rng)?;
    let perturbation = Perturbation::calibrate(kind, epsilon, p, kernel.value_range)?;
    let noisy = plan
        .pairs
        .iter()
        .map(|pair| perturb_pair(kernel, sample.point(pair.i), sample.point(pair.j), perturbation, rng))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_pairs(&plan, &noisy)
}

/// MSE of the subsampled estimator with Laplace noise, for a kernel with
/// values in `[0, 1]`.
///
/// The noise term is `4P / (n eps^2)`: `Pn/2` pairs, each with noise variance
/// `2 (P / eps)^2`, averaged with weight `2 / (Pn)`.
pub fn subsampling_mse(n: usize, p: usize, epsilon: f64, zeta1: f64, zeta2: f64) -> f64 {
    let (nf, pf) = (n as f64, p as f64);
    let sampling = 2.0 / (pf * nf)
        * (2.0 * (pf - 1.0) * (1.0 - 1.0 / (nf - 1.0)) * zeta1 + (1.0 + (pf - 1.0) / (nf - 1.0)) * zeta2);
    sampling + 4.0 * pf / (nf * epsilon * epsilon)
}

/// `P` in `1..=p_max` minimizing [`subsampling_mse`]; the smallest on ties.
pub fn optimal_p_hint(zeta1: f64, zeta2: f64, epsilon: f64, n: usize, p_max: usize) -> usize {
    (1..=p_max.max(1))
        .map(|p| (p, subsampling_mse(n, p, epsilon, zeta1, zeta2)))
        .fold((1, f64::INFINITY), |best, (p, mse)| if mse < best.1 { (p, mse) } else { best })
        .0
}

/// Per-pair budget when every user takes part in `n - 1` releases: the better
/// of basic composition and a conservative advanced-composition inversion.
pub fn allpairs_epsilon(n: usize, epsilon: f64, delta: f64) -> Result<f64, PairError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PairError::BadDelta(delta));
    }
    if n < 2 {
        return Err(PairError::TooSmall);
    }
    let m = (n - 1) as f64;
    let advanced = epsilon / (2.0 * (2.0 * m * (1.0 / delta).ln()).sqrt());
    Ok((epsilon / m).max(advanced))
}

/// Every pair evaluated and released with Laplace noise at the per-pair
/// budget from [`allpairs_epsilon`]; the complete average.
pub fn allpairs_baseline<R: Rng + ?Sized>(
    kernel: &Kernel,
    sample: &Sample,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<f64, PairError> {
    let n = sample.len();
    let eps_pair = allpairs_epsilon(n, epsilon, delta)?;
    let (lo, hi) = kernel.value_range;
    let scale = (hi - lo) / eps_pair;
    let points: Vec<_> = sample.points().collect();
    let mut total = 0.0;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let f = kernel.eval(a, b)?;
            if !(lo..=hi).contains(&f) {
                return Err(PairError::RangeViolation { value: f, lo, hi });
            }
            total += f + laplace(scale, rng);
        }
    }
    Ok(2.0 * total / (n as f64 * (n as f64 - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::exact_ustat;
    use crate::rng::substream;
    use proptest::prelude::*;

    #[test]
    fn plan_examples() {
        let plan = PairPlan::from_permutations(&[vec![2, 0, 3, 1]]).unwrap();
        let pairs: Vec<(usize, usize)> = plan.pairs().iter().map(|p| (p.i, p.j)).collect();
        assert_eq!(pairs, vec![(2, 0), (3, 1)]);

        let mut rng = substream(30, &[]);
        let plan = sample_pairs(4, 2, &mut rng).unwrap();
        assert_eq!(plan.pairs().len(), 4);
        assert_eq!(plan.appearances(), vec![2, 2, 2, 2]);

        let plan = sample_pairs(2, 3, &mut rng).unwrap();
        assert!(plan.pairs().iter().all(|p| (p.i.min(p.j), p.i.max(p.j)) == (0, 1)));
        assert!(matches!(sample_pairs(5, 1, &mut rng), Err(PairError::OddN(5))));
    }

    #[test]
    fn plan_csv() {
        let plan = PairPlan::from_permutations(&[vec![1, 0], vec![0, 1]]).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pair_id,i,j,perm_id\n0,1,0,0\n1,0,1,1\n");
    }

    #[test]
    fn calibration() {
        let p = Perturbation::calibrate(MechanismKind::Laplace, 0.5, 2, (0.0, 1.0)).unwrap();
        assert_eq!(p, Perturbation::Laplace { scale: 4.0 });
        let p = Perturbation::calibrate(MechanismKind::Laplace, f64::INFINITY, 3, (0.0, 1.0)).unwrap();
        let mut rng = substream(31, &[]);
        let v = perturb_value(0.25, (0.0, 1.0), p, &mut rng).unwrap();
        assert_eq!(v.value, 0.25);
        let p = Perturbation::calibrate(MechanismKind::Rr2, f64::INFINITY, 3, (0.0, 1.0)).unwrap();
        let v = perturb_value(1.0, (0.0, 1.0), p, &mut rng).unwrap();
        assert_eq!(v.debiased(), 1.0);
        assert!(matches!(
            perturb_value(1.5, (0.0, 1.0), Perturbation::Laplace { scale: 1.0 }, &mut rng),
            Err(PairError::RangeViolation { .. })
        ));
        assert!(matches!(
            perturb_value(0.5, (0.0, 1.0), Perturbation::Rr2 { flip: 0.1 }, &mut rng),
            Err(PairError::NotBinary(_))
        ));
    }

    #[test]
    fn laplace_moments() {
        let mut rng = substream(32, &[]);
        let m = 100_000;
        let draws: Vec<f64> = (0..m).map(|_| laplace(4.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
        assert!(mean.abs() < 4.0 * (32.0 / m as f64).sqrt());
        // Var of the sample variance: (E x^4 - var^2) / m = (24 b^4 - 4 b^4) / m.
        assert!((var - 32.0).abs() < 4.0 * (20.0 * 256.0 / m as f64).sqrt());
    }

    #[test]
    fn mechanisms_unbiased() {
        let mut rng = substream(33, &[]);
        let m = 100_000;
        for (kind, f, sd) in [
            (MechanismKind::Laplace, 0.3, 2f64.sqrt() * 2.0),
            (MechanismKind::Rr2, 1.0, 0.0),
        ] {
            let pert = Perturbation::calibrate(kind, 1.0, 2, (0.0, 1.0)).unwrap();
            let vals: Vec<f64> = (0..m)
                .map(|_| perturb_value(f, (0.0, 1.0), pert, &mut rng).unwrap().debiased())
                .collect();
            let mean = vals.iter().sum::<f64>() / m as f64;
            let emp_sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
            let sd = if sd > 0.0 { sd } else { emp_sd };
            assert!((mean - f).abs() < 4.0 * sd / (m as f64).sqrt(), "{kind:?} mean {mean}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let plan = PairPlan::from_permutations(&[vec![0, 1]]).unwrap();
        let v = NoisyKernelValue {
            value: 0.7,
            perturbation: Perturbation::Laplace { scale: 1.0 },
            range: (0.0, 1.0),
        };
        assert_eq!(aggregate_pairs(&plan, &[v]).unwrap(), 0.7);
        assert!(matches!(aggregate_pairs(&plan, &[]), Err(PairError::LengthMismatch { .. })));

        // A round-robin schedule covers every pair once in n - 1 rounds.
        let n = 6usize;
        let rounds: Vec<Vec<usize>> = (0..n - 1)
            .map(|r| {
                let mut ring: Vec<usize> = (1..n).collect();
                ring.rotate_left(r);
                let mut order = vec![0, ring[0]];
                for k in 1..n / 2 {
                    order.push(ring[k]);
                    order.push(ring[n - 1 - k]);
                }
                order
            })
            .collect();
        let plan = PairPlan::from_permutations(&rounds).unwrap();
        let mut seen: Vec<(usize, usize)> = plan.pairs().iter().map(|p| (p.i.min(p.j), p.i.max(p.j))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), n * (n - 1) / 2);
        let sample = Sample::Scalar(vec![0.0, 0.1, 0.4, 0.5, 0.9, 1.0]);
        let g = Kernel::gini();
        let pert = Perturbation::calibrate(MechanismKind::Laplace, f64::INFINITY, n - 1, (0.0, 1.0)).unwrap();
        let mut rng = substream(34, &[]);
        let noisy: Vec<_> = plan
            .pairs()
            .iter()
            .map(|p| perturb_pair(&g, sample.point(p.i), sample.point(p.j), pert, &mut rng).unwrap())
            .collect();
        let got = aggregate_pairs(&plan, &noisy).unwrap();
        assert!((got - exact_ustat(&g, &sample).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn subsampled_estimator_unbiased() {
        let sample = Sample::Bivariate((0..20).map(|i| ((i % 5) as f64, (i % 3) as f64)).collect());
        let k = Kernel::kendall_tau();
        let truth = exact_ustat(&k, &sample).unwrap();
        let reps = 5000;
        let est: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = substream(35, &[r]);
                run_pairs_protocol(&k, &sample, 2, 2.0, MechanismKind::Laplace, &mut rng).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / reps as f64;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        assert!((mean - truth).abs() < 4.0 * (var / reps as f64).sqrt());
    }

    #[test]
    fn mse_formula_examples() {
        let (n, eps, z2) = (100usize, 0.5, 0.2);
        let got = subsampling_mse(n, 1, eps, 0.3, z2);
        assert!((got - (2.0 / n as f64 * z2 + 4.0 / (n as f64 * eps * eps))).abs() < 1e-15);
        assert_eq!(subsampling_mse(50, 3, f64::INFINITY, 0.0, 0.0), 0.0);
        // With zeta2 = 2 zeta1 the sampling part is exactly 4 zeta1 / n.
        let (z1, p) = (0.1, 4);
        for n in [1000usize, 100_000, 10_000_000] {
            let nf = n as f64;
            let got = subsampling_mse(n, p, 1.0, z1, 2.0 * z1);
            let want = 4.0 * z1 / nf + 4.0 * p as f64 / nf;
            assert!((got - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn optimal_p_examples() {
        assert_eq!(optimal_p_hint(0.1, 0.2, 1.0, 1000, 20), 1);
        assert_eq!(optimal_p_hint(0.0, 0.25, f64::INFINITY, 1000, 20), 20);
        assert_eq!(optimal_p_hint(0.0, 0.0, 1.0, 1000, 20), 1);
        assert!(optimal_p_hint(0.0, 0.25, 10.0, 1000, 20) > 1);
    }

    #[test]
    fn allpairs_examples() {
        assert_eq!(allpairs_epsilon(2, 0.7, 1e-6).unwrap(), 0.7);
        assert!(allpairs_epsilon(10, 1.0, 0.0).is_err());
        let sample = Sample::Scalar(vec![0.1, 0.2, 0.9]);
        let g = Kernel::gini();
        let mut rng = substream(36, &[]);
        let got = allpairs_baseline(&g, &sample, f64::INFINITY, 1e-6, &mut rng).unwrap();
        assert!((got - exact_ustat(&g, &sample).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn privacy_bookkeeping() {
        // Each user sits in P pairs, each released at eps / P.
        let mut rng = substream(37, &[]);
        for p in 1..5 {
            let plan = sample_pairs(10, p, &mut rng).unwrap();
            let per_pair = match Perturbation::calibrate(MechanismKind::Laplace, 1.0, p, (0.0, 1.0)).unwrap() {
                Perturbation::Laplace { scale } => 1.0 / scale,
                _ => unreachable!(),
            };
            assert!(plan.appearances().iter().all(|&c| (c as f64 * per_pair - 1.0).abs() < 1e-12));
        }
    }

    proptest! {
        #[test]
        fn every_user_in_p_pairs(half in 1usize..40, p in 1usize..6, seed in any::<u64>()) {
            let mut rng = substream(seed, &[]);
            let plan = sample_pairs(2 * half, p, &mut rng).unwrap();
            prop_assert_eq!(plan.pairs().len(), p * half);
            prop_assert!(plan.appearances().iter().all(|&c| c == p));
        }
    }
}
