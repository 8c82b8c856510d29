//! Two-layer perceptron classifier and its training loop.

mod adam;
mod io;
mod mlp;
mod sampler;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use io::{load_model, save_model, ModelProvenance, SavedModel};
pub use mlp::{bce_with_logit, loss, sigmoid, Gradients, MlpModel};
pub use sampler::{class_balanced_weights, sample_epoch};
pub use train::{run_with_early_stopping, train, EpochRecord, EpochRunner, TrainConfig, TrainHistory};
