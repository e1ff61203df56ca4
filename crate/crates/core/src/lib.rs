//! Duplicate-question detection for technical forums.
//!
//! Posts are embedded by a pluggable provider, refined by a weight-shared
//! linear projection trained on duplicate annotations, and ranked by cosine
//! similarity. The pipeline is split into:
//!
//! * [`corpus`]: ingestion, annotation stripping, census statistics, splits.
//! * [`embedding`]: embedding providers and the on-disk vector store.
//! * [`refine`]: the projection head, contrastive losses, gradients, training.
//! * [`rank`]: latent index construction and exact top-k search.
//! * [`eval`]: Top-N accuracy, AUC and setting comparisons.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod rank;
pub mod refine;
pub mod scalar;
pub mod synthetic;
mod util;

pub use corpus::{Corpus, DuplicatePair, Post, SplitSpec};
pub use embedding::EmbeddingStore;
pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use rank::{LatentIndex, RankedList};
pub use refine::{LossKind, ProjectionHead, TrainingConfig, TrainingLog};
pub use scalar::Scalar;

/// Projection head in single precision, the layout of model files.
pub type ProjectionHead32 = ProjectionHead<f32>;
/// Projection head in double precision, used for training.
pub type ProjectionHead64 = ProjectionHead<f64>;
