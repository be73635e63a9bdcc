//! Meta-evaluation metrics.
//!
//! * [`segment_tau`]: Kendall τ_b per source segment across systems,
//!   averaged over segments.
//! * [`spa`]: soft pairwise accuracy of system rankings, built on the
//!   paired permutation test in [`pairwise_p`].
//! * [`contrastive_pa`]: accuracy on contrastive pairs, ties counted wrong.
//! * [`wer`]: word error rate of ASR transcripts.
//!
//! All functions are pure.

mod kendall;
mod pa;
mod permutation;
mod spa;
mod wer;

pub use kendall::{segment_tau, tau_b, TauResult};
pub use pa::{contrastive_pa, PaResult};
pub use permutation::{pairwise_p, PermutationConfig};
pub use spa::{spa, SpaPair, SpaResult};
pub use wer::{edit_distance, wer, wer_str};
