//! Semantically-enhanced hard-negative training for visual-semantic embedding.
//!
//! * [`textsem`] turns captions into reduced semantic vectors (TF-IDF + truncated SVD).
//! * [`losses`] evaluates the sum-of-hinges, max-of-hinges and semantically-enhanced
//!   hard-negative losses with gradients w.r.t. the batch similarity matrix.
//! * [`encoder`] is a minimal bi-encoder with exact backpropagation.
//! * [`trainer`] runs mini-batch training with periodic validation and checkpointing.
//! * [`eval`] holds retrieval metrics and the efficiency / hard-negative diagnostics.
//! * [`data`] loads caption + feature corpora and generates synthetic clustered ones.

pub mod config;
pub mod data;
pub mod encoder;
mod error;
pub mod eval;
pub mod losses;
pub mod textsem;
pub mod trainer;

pub use error::{Error, Result};

pub use data::{Dataset, SyntheticSpec};
pub use encoder::{BatchEmbeddings, EncoderConfig, ModelParams};
pub use eval::{HardNegStats, RelevanceMap, RetrievalReport};
pub use losses::{LossConfig, LossOutput, LossVariant, SimilarityBlock};
pub use textsem::{PreprocessConfig, ReducedSemantics, TermDocMatrix, Vocabulary};
pub use trainer::{TrainConfig, TrainingReport};
