//! The split x mode x seed experiment grid, with an append-only JSONL record store so an
//! interrupted grid resumes where it stopped.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{compute_metrics, Metrics};
use crate::corpus::{read_jsonl, Corpus};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMode};
use crate::model::{save_model, train, MlpModel, ModelProvenance, TrainConfig};
use crate::scalar::Scalar;
use crate::splits::{make_split, SplitAssignment, SplitKind, SplitSet, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub split: SplitKind,
    pub mode: FeatureMode,
    pub seed: u64,
    /// Test-set metrics; `None` when the cell failed.
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
    #[serde(default)]
    pub best_epoch: usize,
    #[serde(default)]
    pub stopped_epoch: usize,
    pub fingerprint: String,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.metrics.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub splits: Vec<SplitSpec>,
    pub modes: Vec<FeatureMode>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub workers: usize,
    /// Where to write one model file per cell, if anywhere.
    pub model_dir: Option<PathBuf>,
}

/// Trained cell handed to an optional observer (e.g. to explain it without retraining).
pub struct CellOutcome<'a, T> {
    pub split: &'a SplitSpec,
    pub assignment: &'a SplitAssignment,
    pub mode: FeatureMode,
    pub seed: u64,
    pub model: &'a MlpModel<T>,
    pub features: &'a FeatureMatrix<T>,
}

fn cell_fingerprint(split: &SplitSpec, mode: FeatureMode, seed: u64, train: &TrainConfig, features: &str) -> Result<String> {
    let mut train = train.clone();
    train.seed = seed;
    let canonical = serde_json::to_string(&serde_json::json!({
        "split": split,
        "mode": mode,
        "seed": seed,
        "train": train,
        "features": features,
    }))?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Trains and evaluates one cell.
fn run_cell<T: Scalar>(
    assignment: &SplitAssignment,
    features: &FeatureMatrix<T>,
    config: &TrainConfig,
) -> Result<(MlpModel<T>, Metrics, usize, usize)> {
    let take = |set| -> Result<FeatureMatrix<T>> { Ok(features.select(&assignment.positions(&features.ids, set)?)) };
    let (tr, va, te) = (take(SplitSet::Train)?, take(SplitSet::Valid)?, take(SplitSet::Test)?);
    if te.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let (model, history) = train(&tr, &va, config)?;
    let scores = model.scores(te.view())?;
    let metrics = compute_metrics(scores.as_slice().expect("contiguous"), &te.labels_u8(), T::of(config.threshold))?;
    Ok((model, metrics, history.best_epoch, history.stopped_epoch()))
}

/// Runs every (split, mode, seed) cell not already completed in `store`.
///
/// `features` must hold a matrix for each requested mode over the same articles as `corpus`.
/// Cell failures are recorded, not propagated. Records come back in grid order
/// (split, then mode, then seed as listed in `config`).
pub fn run_ablation_grid<T: Scalar>(
    corpus: &Corpus,
    features: &BTreeMap<FeatureMode, FeatureMatrix<T>>,
    config: &GridConfig,
    store: Option<&Path>,
    observer: Option<&(dyn Fn(CellOutcome<'_, T>) + Sync)>,
) -> Result<Vec<RunRecord>> {
    config.train.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    let mut feature_prints = BTreeMap::new();
    for mode in &config.modes {
        let m = features
            .get(mode)
            .ok_or_else(|| Error::ModeMismatch(format!("no features computed for mode {mode}")))?;
        feature_prints.insert(*mode, m.fingerprint());
    }

    let mut assignments = Vec::with_capacity(config.splits.len());
    for spec in &config.splits {
        assignments.push(make_split(corpus, spec).map_err(|e| e.to_string()));
    }

    let mut done: HashMap<String, RunRecord> = HashMap::new();
    if let Some(path) = store.filter(|p| p.exists()) {
        for r in read_jsonl::<RunRecord>(path)? {
            if r.is_complete() {
                done.insert(r.fingerprint.clone(), r);
            }
        }
    }

    struct Cell {
        split: usize,
        mode: FeatureMode,
        seed: u64,
        fingerprint: String,
    }
    let mut cells = Vec::new();
    for (si, spec) in config.splits.iter().enumerate() {
        for &mode in &config.modes {
            for &seed in &config.seeds {
                let fingerprint = cell_fingerprint(spec, mode, seed, &config.train, &feature_prints[&mode])?;
                cells.push(Cell {
                    split: si,
                    mode,
                    seed,
                    fingerprint,
                });
            }
        }
    }
    let pending: Vec<usize> = (0..cells.len()).filter(|&i| !done.contains_key(&cells[i].fingerprint)).collect();
    log::info!("grid: {} cells, {} already complete", cells.len(), cells.len() - pending.len());

    if let Some(dir) = &config.model_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let writer = match store {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            Some(Mutex::new((f, path.to_path_buf())))
        }
        None => None,
    };

    let results: Vec<Mutex<Option<RunRecord>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let store_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = config.workers.clamp(1, pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&ci) = pending.get(k) else { break };
                let cell = &cells[ci];
                let spec = &config.splits[cell.split];
                let mut record = RunRecord {
                    split: spec.kind,
                    mode: cell.mode,
                    seed: cell.seed,
                    metrics: None,
                    error: None,
                    model_path: None,
                    best_epoch: 0,
                    stopped_epoch: 0,
                    fingerprint: cell.fingerprint.clone(),
                };
                let mut train_cfg = config.train.clone();
                train_cfg.seed = cell.seed;
                let matrix = &features[&cell.mode];
                let outcome = assignments[cell.split]
                    .as_ref()
                    .map_err(|e| Error::Split(e.clone()))
                    .and_then(|a| run_cell(a, matrix, &train_cfg).map(|r| (a, r)));
                match outcome {
                    Ok((assignment, (model, metrics, best, stopped))) => {
                        record.metrics = Some(metrics);
                        record.best_epoch = best;
                        record.stopped_epoch = stopped;
                        if let Some(dir) = &config.model_dir {
                            let path = dir.join(format!("{}-{}-{}.model", spec.kind, cell.mode, cell.seed));
                            match save_model(&path, &model, &ModelProvenance::of(matrix)) {
                                Ok(()) => record.model_path = Some(path.display().to_string()),
                                Err(e) => log::warn!("could not save model {}: {e}", path.display()),
                            }
                        }
                        if let Some(obs) = observer {
                            obs(CellOutcome {
                                split: spec,
                                assignment,
                                mode: cell.mode,
                                seed: cell.seed,
                                model: &model,
                                features: matrix,
                            });
                        }
                        log::info!(
                            "{} / {} / seed {}: test F1 {:.4} acc {:.4}",
                            spec.kind,
                            cell.mode,
                            cell.seed,
                            metrics.f1,
                            metrics.accuracy
                        );
                    }
                    Err(e) => {
                        log::error!("{} / {} / seed {} failed: {e}", spec.kind, cell.mode, cell.seed);
                        record.error = Some(e.to_string());
                    }
                }
                if let Some(w) = &writer {
                    let mut guard = w.lock().expect("store lock");
                    let (file, path) = &mut *guard;
                    let line = serde_json::to_string(&record).map(|mut l| {
                        l.push('\n');
                        l
                    });
                    let res = match line {
                        Ok(l) => file.write_all(l.as_bytes()).and_then(|_| file.flush()).map_err(|e| Error::io(&*path, e)),
                        Err(e) => Err(e.into()),
                    };
                    if let Err(e) = res {
                        store_error.lock().expect("error slot").get_or_insert(e);
                    }
                }
                *results[ci].lock().expect("result slot") = Some(record);
            });
        }
    });
    if let Some(e) = store_error.into_inner().expect("error slot") {
        return Err(e);
    }
    Ok(cells
        .iter()
        .zip(results)
        .map(|(cell, slot)| {
            slot.into_inner()
                .expect("result slot")
                .or_else(|| done.get(&cell.fingerprint).cloned())
                .expect("every cell either ran or was complete")
        })
        .collect())
}
