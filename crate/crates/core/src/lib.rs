//! Weak supervision for sentence-pair aspect sentiment classification.
//!
//! Reviews are expanded into (review, aspect) pairs, a reference classifier
//! trained on translated source data pseudo-labels target-language pairs,
//! and the pseudo labels are dual-filtered by classifier confidence and
//! embedding similarity before a second round of training. The crate also
//! provides the evaluation metrics and filtering statistics used to judge
//! the result, plus a synthetic two-dialect benchmark.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the types used by the pipeline and the on-disk formats.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod filtering;
pub mod metrics;
pub mod pipeline;
pub mod refclassifier;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reference classifier with `f32` weights, the precision stored in KPC1 files.
pub type Classifier = refclassifier::ClassifierParams<f32>;
/// Double-precision classifier, used for gradient verification.
pub type Classifier64 = refclassifier::ClassifierParams<f64>;
/// Embedding store with `f32` vectors, the precision stored in EMB1 files.
pub type Embeddings = embeddings::EmbeddingStore<f32>;
