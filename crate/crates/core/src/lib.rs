//! Knowledge-graph embeddings by generalized CP decomposition of the binary
//! triple tensor.
//!
//! Entities share one factor matrix for the subject and object axes,
//! relations have their own, and the core tensor is the identity. Training
//! minimizes the Bernoulli (logistic) loss over observed triples and sampled
//! corruptions with closed-form gradients; no autodiff graph is built.
//! Evaluation follows the filtered link-prediction protocol.

pub mod eval;
pub mod gcp;
pub mod io;
pub mod matrix;
pub mod meter;
pub mod oracle;
pub mod real;
pub mod store;
pub mod trainer;
pub mod vocab;

pub use gcp::{Batch, BatchRows, FactorModel, GradSlices, LossFamily};
pub use matrix::Matrix;
pub use real::{Precision, Real};
pub use store::{EntityId, RelationId, Triple, TripleStore};
pub use trainer::{train, TrainConfig, Trainer};
pub use vocab::Vocabulary;
