//! Frequency oracle and hierarchical histogram estimation.

pub mod hadamard;
pub mod hierarchy;

use thiserror::Error;

pub use hadamard::{
    local_randomize, oracle_mse_bound, oracle_variance_bound, HadamardReport, LevelReport, OracleState,
};
pub use hierarchy::{
    build_hier_estimate, level_sizes, split_budget, ExactHierHist, HierHistEstimate, Node,
    NodeCounts, PrivacyBudget, Split,
};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("index {index} does not fit in {bits} bits")]
    BadIndex { index: u64, bits: u8 },
    #[error("level width {0} exceeds the supported maximum")]
    TooManyBits(u8),
    #[error("tree depth {0} is not supported")]
    BadDepth(u8),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("epsilon {epsilon} exceeds {max} required by the advanced split")]
    EpsilonTooLarge { epsilon: f64, max: f64 },
}
