//! Semantic proto-role labeling with an attentive marker network.
//!
//! The pipeline runs from annotated (sentence, predicate, argument) records
//! through label transforms and fixed-length clipping ([`dataset`]), frozen
//! word vectors and learnable marker embeddings ([`embeddings`]), a
//! Bi-LSTM with pairwise self-attention and hierarchical heads ([`model`]),
//! seeded training with early stopping ([`training`]), voter ensembles
//! ([`ensemble`]) and the metric/significance suite ([`evaluation`]).
//!
//! Everything differentiable is built on the small reverse-mode engine in
//! [`autodiff`].

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod embeddings;
pub mod ensemble;
mod error;
pub mod evaluation;
pub mod model;
pub mod predictions;
pub mod synthetic;
pub mod training;

pub use autodiff::{Scalar, Tensor};
pub use dataset::{PreparedExample, PropertyInventory, Response, Split, SprExample, Tag};
pub use embeddings::{EmbeddingTable, Featurizer, OovPolicy};
pub use error::{Error, ErrorKind, Result};
pub use model::{Ablation, Mode, ModelConfig, ModelParams};
pub use predictions::PredictionSet;
pub use training::TrainConfig;
