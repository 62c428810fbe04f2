//! Experiment harness: synthetic data, repeated runs and privacy audits.

pub mod experiment;
pub mod ldp_audit;
pub mod synthetic;

use thiserror::Error;

use crate::auc_protocol::AucError;
use crate::freq_oracle::OracleError;
use crate::kernels::KernelError;
use crate::pairwise_2pc::PairError;
use crate::quantization::QuantError;
use crate::rr_protocol::RrError;

pub use experiment::{
    compare_protocols, run_experiment, DataSource, Experiment, ExperimentReport, ProtocolConfig, RepResult, Task,
};
pub use ldp_audit::{verify_ldp, LdpAudit, Randomizer};
pub use synthetic::{generate, kendall_grid, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    BadSpec(String),
    #[error("{0} is too large to enumerate")]
    TooLargeToEnumerate(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Rr(#[from] RrError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Auc(#[from] AucError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
