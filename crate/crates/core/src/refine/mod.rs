//! The Siamese projection head and its contrastive training.

mod grad;
mod head;
mod loss;
mod sample;
mod train;

pub use grad::{gradients, mnr_gradients, triplet_gradients, BatchInput, Gradients, TripletInput};
pub use head::{ProjectionHead, DEFAULT_OUT_DIM, MODEL_MAGIC};
pub use loss::{cosine_distance, cosine_similarity, mnr_loss, triplet_loss};
pub use sample::{sample_pair_batches, sample_triplets, PairBatch, TripletSample};
pub use train::{train, LossKind, TrainingConfig, TrainingLog};

/// Default SGD step size.
pub const DEFAULT_LEARNING_RATE: f64 = 0.2;
