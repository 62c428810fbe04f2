//! Private AUC from two hierarchical histogram estimates, by a level-order
//! traversal that only descends into nodes whose estimated pair mass clears
//! a noise threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freq_oracle::{
    build_hier_estimate, ExactHierHist, Node, NodeCounts, OracleError, PrivacyBudget, Split,
};
use crate::kernels::{Label, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum AucError {
    #[error("histogram depths differ: {0} vs {1}")]
    DepthMismatch(u8, u8),
    #[error("class {0} is empty")]
    EmptyClass(Label),
    #[error("threshold parameter a must exceed 1, got {0}")]
    BadA(f64),
    #[error("AUC protocol needs a scored sample")]
    NotScored,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Value assigned to a discarded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Half of the product of the children's summed estimates.
    HalfEstimate,
    /// Zero.
    ZeroEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AChoice {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucConfig {
    pub alpha: u8,
    pub a: AChoice,
    pub variant: Variant,
    pub split: Split,
    pub budget: PrivacyBudget,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalStats {
    /// Nodes recursed on, indexed by depth `0..alpha`.
    pub recursed_per_level: Vec<u64>,
    pub discarded_per_level: Vec<u64>,
    /// Frequency-oracle node queries, both classes, root excluded.
    pub queries: u64,
}

fn check_depths<H: NodeCounts>(hp: &H, hm: &H) -> Result<u8, AucError> {
    if hp.alpha() != hm.alpha() {
        return Err(AucError::DepthMismatch(hp.alpha(), hm.alpha()));
    }
    Ok(hp.alpha())
}

/// Unnormalized AUC from exact histograms: at every internal node, positives
/// in the right child beat negatives in the left child.
pub fn uauc_exact(hp: &ExactHierHist, hm: &ExactHierHist) -> Result<u128, AucError> {
    let alpha = check_depths(hp, hm)?;
    let mut total = 0u128;
    let mut stack = vec![Node::ROOT];
    while let Some(p) = stack.pop() {
        if p.depth == alpha {
            continue;
        }
        let (l, r) = (p.child(0), p.child(1));
        total += hp.exact_count(r) as u128 * hm.exact_count(l) as u128;
        for c in [l, r] {
            if hp.exact_count(c) > 0 && hm.exact_count(c) > 0 {
                stack.push(c);
            }
        }
    }
    Ok(total)
}

/// Thresholded traversal. `a` sets `tau = a sqrt(v+ v-)` and the floor
/// `sqrt(a v) / 2` applied to each node estimate before the test. A node is
/// recursed on when the floored product is at least `tau`.
pub fn uauc_private<H: NodeCounts>(
    hp: &H,
    hm: &H,
    a: f64,
    variant: Variant,
) -> Result<(f64, TraversalStats), AucError> {
    let alpha = check_depths(hp, hm)?;
    let (vp, vm) = (hp.variance(), hm.variance());
    let tau = a * (vp * vm).sqrt();
    let floor_p = (a * vp).sqrt() / 2.0;
    let floor_m = (a * vm).sqrt() / 2.0;
    let mut stats = TraversalStats {
        recursed_per_level: vec![0; alpha as usize],
        discarded_per_level: vec![0; alpha as usize],
        queries: 0,
    };
    let mut total = 0.0;
    let mut frontier = vec![(Node::ROOT, hp.n() as f64, hm.n() as f64)];
    for depth in 0..alpha {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (p, est_p, est_m) in frontier {
            let recurse = est_p.max(floor_p) * est_m.max(floor_m) >= tau;
            if !recurse && variant == Variant::ZeroEstimate {
                stats.discarded_per_level[depth as usize] += 1;
                continue;
            }
            let (l, r) = (p.child(0), p.child(1));
            let (pl, pr) = (hp.count(l), hp.count(r));
            let (ml, mr) = (hm.count(l), hm.count(r));
            stats.queries += 4;
            if recurse {
                stats.recursed_per_level[depth as usize] += 1;
                total += pr * ml;
                if depth + 1 < alpha {
                    next.push((l, pl, ml));
                    next.push((r, pr, mr));
                }
            } else {
                stats.discarded_per_level[depth as usize] += 1;
                total += 0.5 * (pl + pr) * (ml + mr);
            }
        }
        frontier = next;
    }
    Ok((total, stats))
}

/// `C` such that the per-level variance bound reads `C n alpha`.
pub fn c_effective(variance: f64, n: u64, alpha: u8) -> f64 {
    variance / (n as f64 * alpha as f64)
}

pub fn auto_a(n_plus: u64, n_minus: u64, alpha: u8, c: f64, variant: Variant) -> Result<f64, AucError> {
    if n_plus == 0 {
        return Err(AucError::EmptyClass(Label::Positive));
    }
    if n_minus == 0 {
        return Err(AucError::EmptyClass(Label::Negative));
    }
    let n = (n_plus + n_minus) as f64;
    let n_min = n_plus.min(n_minus) as f64;
    let alpha = alpha as f64;
    let root = match variant {
        Variant::HalfEstimate => (21.0f64 / 8.0).sqrt() * (2.0 * c * n * alpha / (n_min * n_min)).powf(0.25),
        Variant::ZeroEstimate => ((2.0 * c * alpha * n).sqrt() / (16.0 * n_min)).sqrt(),
    };
    Ok((1.0 + root).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBound {
    pub uauc: f64,
    pub auc: f64,
}

pub fn auc_mse_bound(
    n_plus: u64,
    n_minus: u64,
    alpha: u8,
    c: f64,
    a: f64,
    variant: Variant,
) -> Result<MseBound, AucError> {
    if !(a > 1.0) {
        return Err(AucError::BadA(a));
    }
    let (np, nm) = (n_plus as f64, n_minus as f64);
    let n = np + nm;
    let n_min = np.min(nm);
    let alpha = alpha as f64;
    let tail = (2.0 * n * c * alpha).sqrt() / (a.sqrt() - 1.0);
    let inner = match variant {
        Variant::HalfEstimate => 2.0 * n + (4.0 * a + 1.0) * n_min + 21.0 * tail,
        Variant::ZeroEstimate => 2.0 * n + (8.0 * a + 2.0) * n_min + tail,
    };
    let uauc = c * nm * np * alpha * alpha * inner;
    let pairs = np * nm;
    Ok(MseBound {
        uauc,
        auc: if pairs > 0.0 { uauc / (pairs * pairs) } else { 0.0 },
    })
}

/// Expected-size bound on the set of nodes recursed on at any level.
pub fn recursed_nodes_bound(n: u64, alpha: u8, c: f64, a: f64) -> f64 {
    (n as f64 / (2.0 * c * alpha as f64)).sqrt() / (a.sqrt() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    /// Estimate clamped to `[0, 1]`.
    pub auc: f64,
    pub auc_raw: f64,
    pub uauc_raw: f64,
    /// MSE bound on the AUC scale.
    pub bound: f64,
    pub recursed_per_level: Vec<u64>,
    pub discarded_per_level: Vec<u64>,
    pub a: f64,
    pub c_effective: f64,
    pub variant: Variant,
    pub split: Split,
}

pub fn class_scores(sample: &Sample) -> Result<(Vec<u64>, Vec<u64>), AucError> {
    let Sample::Scored(points) = sample else {
        return Err(AucError::NotScored);
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for p in points {
        match p.label {
            Label::Positive => pos.push(p.score),
            Label::Negative => neg.push(p.score),
        }
    }
    if pos.is_empty() {
        return Err(AucError::EmptyClass(Label::Positive));
    }
    if neg.is_empty() {
        return Err(AucError::EmptyClass(Label::Negative));
    }
    Ok((pos, neg))
}

/// End to end: each class builds its own hierarchical histogram estimate
/// (labels are public), then the traversal runs on the pair.
pub fn run_auc_protocol<R: Rng + ?Sized>(
    sample: &Sample,
    cfg: &AucConfig,
    rng: &mut R,
) -> Result<AucReport, AucError> {
    let (pos, neg) = class_scores(sample)?;
    let hp = build_hier_estimate(&pos, cfg.alpha, cfg.budget, cfg.split, rng)?;
    let hm = build_hier_estimate(&neg, cfg.alpha, cfg.budget, cfg.split, rng)?;
    let (np, nm) = (pos.len() as u64, neg.len() as u64);
    let c = c_effective(hp.variance().max(hm.variance()), np + nm, cfg.alpha);
    let a = match cfg.a {
        AChoice::Auto => auto_a(np, nm, cfg.alpha, c, cfg.variant)?,
        AChoice::Value(a) if a > 1.0 => a,
        AChoice::Value(a) => return Err(AucError::BadA(a)),
    };
    let (uauc, stats) = uauc_private(&hp, &hm, a, cfg.variant)?;
    let auc_raw = uauc / (np as f64 * nm as f64);
    let bound = auc_mse_bound(np, nm, cfg.alpha, c, a, cfg.variant)?;
    Ok(AucReport {
        auc: auc_raw.clamp(0.0, 1.0),
        auc_raw,
        uauc_raw: uauc,
        bound: bound.auc,
        recursed_per_level: stats.recursed_per_level,
        discarded_per_level: stats.discarded_per_level,
        a,
        c_effective: c,
        variant: cfg.variant,
        split: cfg.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute(pos: &[u64], neg: &[u64]) -> u128 {
        pos.iter()
            .map(|p| neg.iter().filter(|&&q| p > &q).count() as u128)
            .sum()
    }

    /// Exact counts with a declared variance, for driving the threshold.
    struct WithVariance(ExactHierHist, f64);

    impl NodeCounts for WithVariance {
        fn alpha(&self) -> u8 {
            self.0.alpha()
        }
        fn n(&self) -> u64 {
            self.0.n()
        }
        fn count(&self, node: Node) -> f64 {
            self.0.count(node)
        }
        fn variance(&self) -> f64 {
            self.1
        }
    }

    #[test]
    fn exact_examples() {
        let h = |s: &[u64]| ExactHierHist::new(2, s).unwrap();
        assert_eq!(uauc_exact(&h(&[2, 3]), &h(&[0, 1])), Ok(4));
        assert_eq!(uauc_exact(&h(&[1]), &h(&[1])), Ok(0));
        assert_eq!(uauc_exact(&h(&[2, 2, 3]), &h(&[0, 1])), Ok(6));
        let deeper = ExactHierHist::new(3, &[1]).unwrap();
        assert_eq!(uauc_exact(&h(&[1]), &deeper), Err(AucError::DepthMismatch(2, 3)));
    }

    #[test]
    fn huge_threshold_discards_root() {
        let hp = WithVariance(ExactHierHist::new(3, &[5, 6, 7]).unwrap(), 1.0);
        let hm = WithVariance(ExactHierHist::new(3, &[0, 1]).unwrap(), 1.0);
        let (u, stats) = uauc_private(&hp, &hm, 1e12, Variant::HalfEstimate).unwrap();
        assert_eq!(u, 0.5 * 3.0 * 2.0);
        assert_eq!(stats.discarded_per_level, vec![1, 0, 0]);
        let (u, _) = uauc_private(&hp, &hm, 1e12, Variant::ZeroEstimate).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn threshold_constants() {
        let (a, v) = (2.0f64, 100.0f64);
        assert_eq!(a * (v * v).sqrt(), 200.0);
        assert!(((a * v).sqrt() / 2.0 - 7.0711).abs() < 1e-4);
    }

    #[test]
    fn auto_a_examples() {
        for variant in [Variant::HalfEstimate, Variant::ZeroEstimate] {
            let tiny = auto_a(10, 10, 4, 1e-18, variant).unwrap();
            assert!(tiny > 1.0 && tiny < 1.001);
        }
        let a = auto_a(10_000, 10_000, 10, 1.0, Variant::HalfEstimate).unwrap();
        let want = (1.0 + (21.0f64 / 8.0).sqrt() * (4e5f64 / 1e8).powf(0.25)).powi(2);
        assert!((a - want).abs() < 1e-12);
        assert_eq!(auto_a(0, 3, 4, 1.0, Variant::HalfEstimate), Err(AucError::EmptyClass(Label::Positive)));
    }

    #[test]
    fn bound_examples() {
        let b = auc_mse_bound(10, 10, 0, 1.0, 2.0, Variant::HalfEstimate).unwrap();
        assert_eq!(b.uauc, 0.0);
        assert!(auc_mse_bound(10, 10, 3, 1.0, 1.0, Variant::HalfEstimate).is_err());
        let a = auto_a(10_000, 10_000, 10, 1.0, Variant::HalfEstimate).unwrap();
        let b = auc_mse_bound(10_000, 10_000, 10, 1.0, a, Variant::HalfEstimate).unwrap();
        assert!(b.auc.is_finite() && b.auc > 0.0);
        assert!((b.auc * 1e16 - b.uauc).abs() < 1e-6 * b.uauc);
        // Growing n with a fixed class ratio only grows the bound.
        let mut prev = 0.0;
        for n in [100u64, 1000, 10_000] {
            let u = auc_mse_bound(n, n, 8, 1.0, 3.0, Variant::ZeroEstimate).unwrap().uauc;
            assert!(u > prev);
            prev = u;
        }
    }

    #[test]
    fn report_is_clamped_and_sized() {
        let sample = crate::harness::synthetic::auc_one(16, 50, 50);
        let cfg = AucConfig {
            alpha: 4,
            a: AChoice::Auto,
            variant: Variant::HalfEstimate,
            split: Split::Users,
            budget: PrivacyBudget::pure(0.5),
        };
        let mut rng = substream(21, &[]);
        let r = run_auc_protocol(&sample, &cfg, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&r.auc));
        assert_eq!(r.recursed_per_level.len(), 4);
        assert!(r.a > 1.0);
    }

    #[test]
    fn recursed_nodes_within_expected_bound() {
        let (np, nm, alpha) = (2000u64, 2000u64, 8u8);
        let mut rng = substream(22, &[]);
        let scores: Vec<u64> = (0..np + nm).map(|_| rng.gen_range(0..1u64 << alpha)).collect();
        let sample = Sample::Scored(
            scores
                .iter()
                .enumerate()
                .map(|(i, &score)| crate::kernels::ScoredPoint {
                    score,
                    label: if (i as u64) < np { Label::Positive } else { Label::Negative },
                })
                .collect(),
        );
        let cfg = AucConfig {
            alpha,
            a: AChoice::Value(2.0),
            variant: Variant::HalfEstimate,
            split: Split::Users,
            budget: PrivacyBudget::pure(4.0),
        };
        let runs = 200;
        let mut per_level = vec![Vec::new(); alpha as usize];
        let mut c = 0.0;
        for run in 0..runs {
            let mut rng = substream(23, &[run]);
            let r = run_auc_protocol(&sample, &cfg, &mut rng).unwrap();
            c = r.c_effective;
            for (m, &k) in r.recursed_per_level.iter().enumerate() {
                per_level[m].push(k as f64);
            }
        }
        let bound = recursed_nodes_bound(np + nm, alpha, c, 2.0);
        for counts in &per_level {
            let mean = counts.iter().sum::<f64>() / runs as f64;
            let var = counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
            assert!(mean <= bound + 4.0 * (var / runs as f64).sqrt(), "mean {mean} bound {bound}");
        }
    }

    #[test]
    fn query_count_tracks_recursion() {
        let mut rng = substream(24, &[]);
        let scores: Vec<u64> = (0..400).map(|_| rng.gen_range(0..64)).collect();
        let (pos, neg) = scores.split_at(200);
        let budget = PrivacyBudget::pure(2.0);
        let hp = build_hier_estimate(pos, 6, budget, Split::BudgetBasic, &mut rng).unwrap();
        let hm = build_hier_estimate(neg, 6, budget, Split::BudgetBasic, &mut rng).unwrap();
        for variant in [Variant::ZeroEstimate, Variant::HalfEstimate] {
            let (_, s) = uauc_private(&hp, &hm, 1.5, variant).unwrap();
            let recursed: u64 = s.recursed_per_level.iter().sum();
            let discarded: u64 = s.discarded_per_level.iter().sum();
            let extra = if variant == Variant::HalfEstimate { 4 * discarded } else { 0 };
            assert!(s.queries <= 2 * 2 * recursed + 2 + extra);
            for m in 1..s.recursed_per_level.len() {
                assert!(s.recursed_per_level[m] <= 2 * s.recursed_per_level[m - 1]);
            }
        }
    }

    proptest! {
        #[test]
        fn noise_free_traversal_is_exact(
            alpha in 1u8..=6,
            seed in any::<u64>(),
            n_pos in 1usize..100,
            n_neg in 1usize..100,
        ) {
            let mut rng = substream(seed, &[]);
            let d = 1u64 << alpha;
            let pos: Vec<u64> = (0..n_pos).map(|_| rng.gen_range(0..d)).collect();
            let neg: Vec<u64> = (0..n_neg).map(|_| rng.gen_range(0..d)).collect();
            let hp = ExactHierHist::new(alpha, &pos).unwrap();
            let hm = ExactHierHist::new(alpha, &neg).unwrap();
            let want = brute(&pos, &neg);
            prop_assert_eq!(uauc_exact(&hp, &hm).unwrap(), want);
            for variant in [Variant::HalfEstimate, Variant::ZeroEstimate] {
                let (u, _) = uauc_private(&hp, &hm, 2.0, variant).unwrap();
                prop_assert_eq!(u, want as f64);
            }
        }
    }
}
