//! Supervised hashing with a joint similarity and classification objective.
//!
//! A linear hash layer maps precomputed image features to K-bit codes and a
//! softmax head on top of the hash layer predicts class labels. Both are
//! trained together by minibatch SGD on a weighted sum of a pairwise
//! likelihood loss (with a quantization penalty) and cross-entropy. Trained
//! models encode a database into a packed code table that is searched by
//! exact Hamming ranking, and retrieval is scored with MAP, precision/recall
//! at k, precision/recall over Hamming radius, and overall accuracy.
//!
//! Run `cargo run --example <name>` for a tour; see `examples/` in this crate.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod index;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{FeatureVector, HashCode, ModelParams};
pub use objective::Hyperparams;
