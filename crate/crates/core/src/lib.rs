//! Private estimation of degree-2 U-statistics under local differential
//! privacy: randomized response with debiased aggregation, hierarchical
//! histograms for AUC, and pair subsampling with output perturbation.

pub mod auc_protocol;
pub mod cli;
pub mod discrete;
pub mod freq_oracle;
pub mod harness;
pub mod kernels;
pub mod pairwise_2pc;
pub mod quantization;
pub mod rng;
pub mod rr_protocol;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Discrete(#[from] discrete::DiscreteError),
    #[error(transparent)]
    Kernel(#[from] kernels::KernelError),
    #[error(transparent)]
    Quant(#[from] quantization::QuantError),
    #[error(transparent)]
    Rr(#[from] rr_protocol::RrError),
    #[error(transparent)]
    Oracle(#[from] freq_oracle::OracleError),
    #[error(transparent)]
    Auc(#[from] auc_protocol::AucError),
    #[error(transparent)]
    Pair(#[from] pairwise_2pc::PairError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Ingest(#[from] cli::ingest::IngestError),
    #[error("bad configuration: {0}")]
    Config(serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
