use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_epoch, AdamConfig, AdamState, MlpModel};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            max_epochs: 300,
            patience: 20,
            batch_size: 32,
            threshold: 0.5,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            v.push("max_epochs must be >= 1".into());
        }
        if self.patience == 0 {
            v.push("patience must be >= 1".into());
        }
        if self.batch_size == 0 {
            v.push("batch_size must be >= 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            v.push(format!("threshold must be in (0, 1), got {}", self.threshold));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                v.push(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            v.push(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose snapshot was returned.
    pub best_epoch: usize,
    pub best_valid_f1: f64,
}

impl TrainHistory {
    pub fn stopped_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_f1\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.valid_f1);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One trainable thing as seen by the early-stopping loop.
pub trait EpochRunner {
    type Snapshot;

    /// Trains one epoch (1-based) and returns its mean training loss.
    fn run_epoch(&mut self, epoch: usize) -> Result<f64>;

    /// Validation F1 of the current state.
    fn validate(&mut self) -> Result<f64>;

    fn snapshot(&self) -> Self::Snapshot;
}

/// Runs up to `max_epochs`, keeping the snapshot with the highest validation F1.
/// Only a strict improvement resets the patience counter; stops once `patience`
/// epochs pass without one.
pub fn run_with_early_stopping<R: EpochRunner>(
    runner: &mut R,
    max_epochs: usize,
    patience: usize,
) -> Result<(R::Snapshot, TrainHistory)> {
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, R::Snapshot)> = None;
    let mut stale = 0;
    for epoch in 1..=max_epochs {
        let train_loss = runner.run_epoch(epoch)?;
        let valid_f1 = runner.validate()?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_f1,
        });
        log::debug!("epoch {epoch}: loss {train_loss:.6} valid F1 {valid_f1:.4}");
        if best.as_ref().is_none_or(|(f, _)| valid_f1 > *f) {
            best = Some((valid_f1, runner.snapshot()));
            history.best_epoch = epoch;
            history.best_valid_f1 = valid_f1;
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }
    let (_, snapshot) = best.ok_or_else(|| Error::InvalidConfig("max_epochs must be >= 1".into()))?;
    Ok((snapshot, history))
}

struct MlpRunner<'a, T> {
    model: MlpModel<T>,
    adam: AdamState<T>,
    adam_cfg: AdamConfig,
    batch_size: usize,
    threshold: T,
    rng: ChaCha8Rng,
    train_x: ArrayView2<'a, T>,
    train_labels: &'a [Label],
    valid_x: ArrayView2<'a, T>,
    valid_labels: Vec<u8>,
}

impl<T: Scalar> EpochRunner for MlpRunner<'_, T> {
    type Snapshot = MlpModel<T>;

    fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
        let order = sample_epoch(self.train_labels, self.rng.random())?;
        let mut total = 0.0;
        for (step, batch) in order.chunks(self.batch_size).enumerate() {
            let x = self.train_x.select(Axis(0), batch);
            let y: Vec<u8> = batch.iter().map(|&i| self.train_labels[i].as_u8()).collect();
            let (loss, mut grad) = self.model.batch_gradients(x.view(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, step });
            }
            grad.scale(T::one() / T::of(batch.len() as f64));
            self.adam.update(&mut self.model, &grad, &self.adam_cfg);
            if !self.model.is_finite() {
                return Err(Error::NanLoss { epoch, step });
            }
            total += loss.as_f64();
        }
        Ok(total / order.len() as f64)
    }

    fn validate(&mut self) -> Result<f64> {
        let scores = self.model.scores(self.valid_x)?;
        Ok(compute_metrics(scores.as_slice().expect("contiguous"), &self.valid_labels, self.threshold)?.f1)
    }

    fn snapshot(&self) -> MlpModel<T> {
        self.model.clone()
    }
}

/// Trains a fresh model on `train`, early-stopping on `valid`. Returns the best snapshot.
pub fn train<T: Scalar>(
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    config: &TrainConfig,
) -> Result<(MlpModel<T>, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(Error::EmptySplit("valid"));
    }
    if train.layout != valid.layout {
        return Err(Error::ModeMismatch(format!(
            "train features are {} but valid features are {}",
            train.mode(),
            valid.mode()
        )));
    }
    let train_ids: HashSet<&str> = train.ids.iter().map(String::as_str).collect();
    if let Some(id) = valid.ids.iter().find(|id| train_ids.contains(id.as_str())) {
        return Err(Error::Split(format!("article {id:?} is in both train and valid")));
    }

    let dim = train.layout.len();
    let mut runner = MlpRunner {
        model: MlpModel::init(dim, config.seed),
        adam: AdamState::new(dim),
        adam_cfg: config.adam(),
        batch_size: config.batch_size,
        threshold: T::of(config.threshold),
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5a3b_1e00_0001),
        train_x: train.view(),
        train_labels: &train.labels,
        valid_x: valid.view(),
        valid_labels: valid.labels_u8(),
    };
    run_with_early_stopping(&mut runner, config.max_epochs, config.patience)
}
