//! Propaganda detection from fused text embeddings and concept annotations
//! (genre, topic, persuasion techniques), with distribution-shift splits,
//! ablation grids and grouped Shapley attributions.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`,
//! which is what the command-line tool and the reported numbers use.

pub mod annotate;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod model;
pub mod scalar;
pub mod splits;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp = model::MlpModel<f64>;
pub type Features = features::FeatureMatrix<f64>;
pub type FeatureVec = features::FeatureVector<f64>;
pub type Embeddings = features::EmbeddingTable<f64>;
pub type SavedMlp = model::SavedModel<f64>;
