//! Asymmetric graph neural networks on directed graphs.
//!
//! Every node carries two embeddings: an outgoing one (`S`) propagated along
//! successors and an incoming one (`R`) propagated along predecessors. The two
//! streams use the dual normalized operators `Ã = O^{-1/2}(A+I)P^{-1/2}` and
//! `Â = Ãᵀ`, and training combines a task loss with an edge-likelihood
//! regularizer built from `sigmoid(s_i · r_j)`.
//!
//! The crate is `no_std` (with `alloc`) and deterministic: the same seed and
//! inputs produce bit-identical results. File formats, checkpoints and the
//! command line live in the companion `agnn` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
mod error;
pub mod graph;
pub mod linalg;
pub mod loss;
pub mod model;
pub(crate) mod seed;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{SparseMatrix, Tensor};
