//! Quality estimation for speech translation, and meta-evaluation of
//! quality metrics.
//!
//! - [`corpus`]: segment corpora, contrastive sets, embedding containers,
//!   checkpoints.
//! - [`metrics`]: segment-level Kendall τ_b, soft pairwise accuracy,
//!   contrastive pairwise accuracy, word error rate.
//! - [`estimator`]: the regression estimator over precomputed embeddings.
//! - [`probing`]: MLP probes on frozen representations.
//! - [`ablation`]: source-shuffling ablations.

pub mod ablation;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod probing;
pub mod synthetic;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../book/src/probing.md")]
    mod probing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
