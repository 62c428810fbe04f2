//! Hierarchical histograms over `[0, 2^alpha)`: exact prefix counts and
//! per-level frequency-oracle estimates.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hadamard::{local_randomize, oracle_variance_bound, OracleState, MAX_BITS};
use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn pure(epsilon: f64) -> Self {
        Self { epsilon, delta: 0.0 }
    }
}

/// How the privacy budget is spread over the `alpha` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Every user reports on every level with `eps / alpha`.
    BudgetBasic,
    /// Every user reports on every level; advanced composition with the
    /// budget's `delta`.
    BudgetAdvanced,
    /// Users are partitioned across levels and report once with `eps`.
    Users,
}

/// Per-level epsilon for a split.
pub fn split_budget(alpha: u8, budget: PrivacyBudget, split: Split) -> Result<f64, OracleError> {
    if alpha == 0 {
        return Err(OracleError::BadDepth(alpha));
    }
    let eps = budget.epsilon;
    if !(eps > 0.0) {
        return Err(OracleError::BadEpsilon(eps));
    }
    let a = alpha as f64;
    match split {
        Split::BudgetBasic => Ok(eps / a),
        Split::Users => Ok(eps),
        Split::BudgetAdvanced => {
            let delta = budget.delta;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(OracleError::BadDelta(delta));
            }
            if eps > a.sqrt() * std::f64::consts::LN_2 {
                return Err(OracleError::EpsilonTooLarge {
                    epsilon: eps,
                    max: a.sqrt() * std::f64::consts::LN_2,
                });
            }
            Ok(eps / (a.sqrt() * (1.0 + (2.0 * (1.0 / delta).ln()).sqrt())))
        }
    }
}

/// Even partition of `n` users over `alpha` levels, remainder to the
/// earliest levels.
pub fn level_sizes(n: usize, alpha: u8) -> Vec<usize> {
    let a = alpha as usize;
    (0..a).map(|m| n / a + usize::from(m < n % a)).collect()
}

/// Tree node: the `depth`-bit prefix `prefix`. The root has depth 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub depth: u8,
    pub prefix: u64,
}

impl Node {
    pub const ROOT: Node = Node { depth: 0, prefix: 0 };

    pub fn child(self, bit: u64) -> Node {
        Node {
            depth: self.depth + 1,
            prefix: (self.prefix << 1) | bit,
        }
    }
}

/// Read access to (estimated) node counts of a depth-`alpha` tree.
pub trait NodeCounts {
    fn alpha(&self) -> u8;
    /// Number of users; the root count, which is public.
    fn n(&self) -> u64;
    fn count(&self, node: Node) -> f64;
    /// Variance bound shared by all non-root nodes.
    fn variance(&self) -> f64;
}

/// Exact hierarchical histogram backed by sorted scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactHierHist {
    alpha: u8,
    sorted: Vec<u64>,
}

impl ExactHierHist {
    pub fn new(alpha: u8, scores: &[u64]) -> Result<Self, OracleError> {
        check_scores(alpha, scores)?;
        let mut sorted = scores.to_vec();
        sorted.sort_unstable();
        Ok(Self { alpha, sorted })
    }

    pub fn exact_count(&self, node: Node) -> u64 {
        let shift = self.alpha - node.depth;
        let lo = node.prefix << shift;
        let hi = (node.prefix + 1) << shift;
        (self.sorted.partition_point(|&s| s < hi) - self.sorted.partition_point(|&s| s < lo)) as u64
    }
}

impl NodeCounts for ExactHierHist {
    fn alpha(&self) -> u8 {
        self.alpha
    }

    fn n(&self) -> u64 {
        self.sorted.len() as u64
    }

    fn count(&self, node: Node) -> f64 {
        self.exact_count(node) as f64
    }

    fn variance(&self) -> f64 {
        0.0
    }
}

fn check_scores(alpha: u8, scores: &[u64]) -> Result<(), OracleError> {
    if alpha == 0 || alpha > MAX_BITS {
        return Err(OracleError::BadDepth(alpha));
    }
    match scores.iter().find(|&&s| s >> alpha != 0) {
        Some(&s) => Err(OracleError::BadIndex { index: s, bits: alpha }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
struct Level {
    oracle: OracleState,
    scale: f64,
    variance: f64,
}

/// Noisy hierarchical histogram. Level `m` nodes are answered only by the
/// level-`m` oracle; nothing is materialized until queried.
#[derive(Debug, Clone)]
pub struct HierHistEstimate {
    alpha: u8,
    n: u64,
    split: Split,
    epsilon_level: f64,
    levels: Vec<Level>,
}

impl HierHistEstimate {
    pub fn split(&self) -> Split {
        self.split
    }

    pub fn epsilon_level(&self) -> f64 {
        self.epsilon_level
    }

    /// Users contributing to level `m` (1-based).
    pub fn level_users(&self, m: u8) -> u64 {
        self.levels[m as usize - 1].oracle.n()
    }

    pub fn level_variance(&self, m: u8) -> f64 {
        self.levels[m as usize - 1].variance
    }
}

impl NodeCounts for HierHistEstimate {
    fn alpha(&self) -> u8 {
        self.alpha
    }

    fn n(&self) -> u64 {
        self.n
    }

    fn count(&self, node: Node) -> f64 {
        if node.depth == 0 {
            return self.n as f64;
        }
        let level = &self.levels[node.depth as usize - 1];
        level.scale * level.oracle.estimate_count(node.prefix).expect("prefix fits its level")
    }

    fn variance(&self) -> f64 {
        self.levels.iter().map(|l| l.variance).fold(0.0, f64::max)
    }
}

/// Collects the users' reports for every level and sets up the per-level
/// estimators. Under [`Split::Users`] the level-`m` estimate is rescaled by
/// `n / n_m`, and its variance bound by the square of that factor.
pub fn build_hier_estimate<R: Rng + ?Sized>(
    scores: &[u64],
    alpha: u8,
    budget: PrivacyBudget,
    split: Split,
    rng: &mut R,
) -> Result<HierHistEstimate, OracleError> {
    check_scores(alpha, scores)?;
    let eps = split_budget(alpha, budget, split)?;
    let n = scores.len();
    let report_level = |m: u8, users: &mut dyn Iterator<Item = u64>, rng: &mut R| {
        users
            .map(|s| local_randomize(m, eps, s >> (alpha - m), rng))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|reports| OracleState::from_reports(m, eps, reports))
    };
    let mut levels = Vec::with_capacity(alpha as usize);
    match split {
        Split::BudgetBasic | Split::BudgetAdvanced => {
            for m in 1..=alpha {
                let oracle = report_level(m, &mut scores.iter().copied(), rng)?;
                levels.push(Level {
                    oracle,
                    scale: 1.0,
                    variance: oracle_variance_bound(n as u64, eps),
                });
            }
        }
        Split::Users => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut start = 0;
            for (m, size) in (1..=alpha).zip(level_sizes(n, alpha)) {
                let group = &order[start..start + size];
                start += size;
                let oracle = report_level(m, &mut group.iter().map(|&i| scores[i]), rng)?;
                let scale = if size == 0 { 0.0 } else { n as f64 / size as f64 };
                levels.push(Level {
                    oracle,
                    scale,
                    variance: scale * scale * oracle_variance_bound(size as u64, eps),
                });
            }
        }
    }
    Ok(HierHistEstimate {
        alpha,
        n: n as u64,
        split,
        epsilon_level: eps,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn split_examples() {
        let b = PrivacyBudget { epsilon: 1.0, delta: 1e-8 };
        assert_eq!(split_budget(16, b, Split::BudgetBasic).unwrap(), 1.0 / 16.0);
        let adv = split_budget(16, b, Split::BudgetAdvanced).unwrap();
        let want = 1.0 / (4.0 * (1.0 + (2.0 * 1e8f64.ln()).sqrt()));
        assert!((adv - want).abs() < 1e-15);
        assert!((adv - 0.03536).abs() < 5e-5);
        assert_eq!(split_budget(16, b, Split::Users).unwrap(), 1.0);
        assert!(matches!(
            split_budget(16, PrivacyBudget::pure(1.0), Split::BudgetAdvanced),
            Err(OracleError::BadDelta(_))
        ));
        assert!(matches!(
            split_budget(1, b, Split::BudgetAdvanced),
            Err(OracleError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn level_size_examples() {
        let sizes = level_sizes(105, 10);
        assert_eq!(sizes, vec![11, 11, 11, 11, 11, 10, 10, 10, 10, 10]);
        assert_eq!(level_sizes(3, 5), vec![1, 1, 1, 0, 0]);
    }

    #[test]
    fn exact_histogram_of_small_multiset() {
        let h = ExactHierHist::new(2, &[0, 1, 2, 2, 3]).unwrap();
        assert_eq!(h.exact_count(Node::ROOT), 5);
        assert_eq!(h.exact_count(Node::ROOT.child(0)), 2);
        assert_eq!(h.exact_count(Node::ROOT.child(1)), 3);
        let leaves: Vec<u64> = (0..4).map(|p| h.exact_count(Node { depth: 2, prefix: p })).collect();
        assert_eq!(leaves, vec![1, 1, 2, 1]);
        assert!(ExactHierHist::new(2, &[4]).is_err());
    }

    #[test]
    fn noise_free_estimate_is_unbiased_by_enumeration() {
        // At eps = inf each level-m report is (j, H(j, prefix)) with j uniform;
        // averaging over all j gives the prefix count exactly.
        let scores = [0u64, 1, 2, 2, 3];
        let h = ExactHierHist::new(2, &scores).unwrap();
        for m in 1..=2u8 {
            for p in 0..(1u64 << m) {
                let d = 1u64 << m;
                let mean: f64 = scores
                    .iter()
                    .map(|&s| {
                        (0..d)
                            .map(|j| {
                                let y = super::super::hadamard::hadamard_sign(j, s >> (2 - m));
                                (y * super::super::hadamard::hadamard_sign(j, p)) as f64
                            })
                            .sum::<f64>()
                            / d as f64
                    })
                    .sum();
                assert_eq!(mean, h.exact_count(Node { depth: m, prefix: p }) as f64);
            }
        }
    }

    #[test]
    fn empty_input_estimates_zero() {
        let mut rng = substream(7, &[]);
        let est = build_hier_estimate(&[], 3, PrivacyBudget::pure(1.0), Split::BudgetBasic, &mut rng).unwrap();
        assert_eq!(est.count(Node::ROOT), 0.0);
        assert_eq!(est.count(Node { depth: 3, prefix: 5 }), 0.0);
        let est = build_hier_estimate(&[], 3, PrivacyBudget::pure(1.0), Split::Users, &mut rng).unwrap();
        assert_eq!(est.count(Node { depth: 2, prefix: 1 }), 0.0);
    }

    #[test]
    fn monte_carlo_unbiased_per_node() {
        let scores: Vec<u64> = vec![0, 1, 2, 2, 3, 3, 3, 7, 6, 6];
        let exact = ExactHierHist::new(3, &scores).unwrap();
        for split in [Split::BudgetBasic, Split::Users] {
            let reps = 5000;
            let nodes: Vec<Node> = (1..=3u8)
                .flat_map(|m| (0..(1u64 << m)).map(move |p| Node { depth: m, prefix: p }))
                .collect();
            let mut sums = vec![0.0; nodes.len()];
            let mut sq = vec![0.0; nodes.len()];
            for rep in 0..reps {
                let mut rng = substream(8, &[rep]);
                let est = build_hier_estimate(&scores, 3, PrivacyBudget::pure(3.0), split, &mut rng).unwrap();
                for (i, &node) in nodes.iter().enumerate() {
                    let v = est.count(node);
                    sums[i] += v;
                    sq[i] += v * v;
                }
            }
            for (i, &node) in nodes.iter().enumerate() {
                let mean = sums[i] / reps as f64;
                let var = sq[i] / reps as f64 - mean * mean;
                let se = (var / reps as f64).sqrt();
                let truth = exact.exact_count(node) as f64;
                assert!((mean - truth).abs() < 4.0 * se + 1e-9, "{split:?} {node:?} {mean} vs {truth}");
            }
        }
    }

    #[test]
    fn users_split_variance_includes_rescaling() {
        let mut rng = substream(9, &[]);
        let scores: Vec<u64> = (0..100).map(|i| i % 16).collect();
        let est = build_hier_estimate(&scores, 4, PrivacyBudget::pure(1.0), Split::Users, &mut rng).unwrap();
        let c2 = super::super::hadamard::debias_factor(1.0).powi(2);
        assert_eq!(est.level_users(1), 25);
        assert!((est.level_variance(1) - 16.0 * 25.0 * c2).abs() < 1e-9);
        assert!((est.variance() - 16.0 * 25.0 * c2).abs() < 1e-9);
    }
}
