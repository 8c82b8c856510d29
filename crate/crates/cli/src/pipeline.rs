//! The pipeline stages. Each one checks its manifest first and skips when its inputs and
//! settings are unchanged and its outputs are intact; stages that need upstream artifacts
//! bring those up to date first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use propdet_core::annotate::{
    annotate_corpus, corpus_statistics, AnnotationCache, Annotator, OfflineAnnotator, RemoteAnnotator,
    TechniqueRegistry,
};
use propdet_core::corpus::synthetic::{generate_synthetic_corpus, generate_synthetic_embeddings};
use propdet_core::corpus::{load_corpus_with, save_corpus, Corpus};
use propdet_core::eval::{aggregate, compute_metrics, results_csv, run_ablation_grid, CellOutcome, GridConfig, RunRecord, Summary};
use propdet_core::explain::{baseline_vector, explain_split, write_explanations, SplitExplanation};
use propdet_core::features::{featurize_corpus, load_embeddings, FeatureGroup, FeatureMode, FuseOptions};
use propdet_core::model::{load_model, save_model, train, ModelProvenance};
use propdet_core::splits::{make_split, verify_assignment, SplitAssignment, SplitSet, SplitSpec};
use propdet_core::{Embeddings, Features};

use crate::config::{sha256_hex, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{digest, digests, display_path, FileDigest, Manifest};
use crate::{ensure_parent, io_err};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub manifest: PathBuf,
    /// One-line human summary.
    pub message: String,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    registry: TechniqueRegistry,
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

fn stage_key(stage: &str, settings: serde_json::Value, inputs: &[FileDigest]) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::json!({
        "stage": stage,
        "settings": settings,
        "inputs": inputs,
    }))?;
    Ok(sha256_hex(canonical.as_bytes()))
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        })
    }
}

fn cell_name(spec: &SplitSpec, mode: FeatureMode, seed: u64) -> String {
    format!("{}-{}-{}", spec.kind, mode, seed)
}

impl Pipeline {
    /// Validates `cfg` (reporting every problem) and prepares the output directory.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.paths.out.clone();
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        let registry = cfg.registry()?;
        Ok(Pipeline { cfg, out, registry })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.path("corpus/articles.jsonl")
    }

    pub fn sources_path(&self) -> PathBuf {
        self.path("corpus/sources.jsonl")
    }

    pub fn annotated_path(&self) -> PathBuf {
        self.path("annotate/articles.jsonl")
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.cfg
            .paths
            .embeddings
            .clone()
            .unwrap_or_else(|| self.path("corpus/embeddings.vec"))
    }

    pub fn features_path(&self, mode: FeatureMode) -> PathBuf {
        self.path(&format!("features/{mode}.pdfm"))
    }

    pub fn split_path(&self, spec: &SplitSpec) -> PathBuf {
        self.path(&format!("splits/{}.jsonl", spec.kind))
    }

    pub fn model_path(&self, spec: &SplitSpec, mode: FeatureMode, seed: u64) -> PathBuf {
        self.path(&format!("models/{}.model", cell_name(spec, mode, seed)))
    }

    pub fn records_path(&self) -> PathBuf {
        self.path("ablate/records.jsonl")
    }

    fn manifest(&self, stage: &str, key: String, seeds: Vec<u64>, inputs: Vec<FileDigest>, outputs: &[PathBuf]) -> Result<Manifest> {
        Ok(Manifest {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_fingerprint: self.cfg.fingerprint(),
            stage_key: key,
            seeds,
            registry_version: Some(self.registry.version.clone()),
            embedding_checksum: None,
            inputs,
            outputs: digests(outputs, &self.out)?,
            notes: BTreeMap::new(),
        })
    }

    fn report(&self, stage: &str, status: StageStatus, message: String) -> StageReport {
        StageReport {
            stage: stage.to_string(),
            status,
            manifest: crate::manifest::manifest_path(&self.out, stage),
            message,
        }
    }

    fn config_inputs(&self) -> Result<Vec<FileDigest>> {
        let p = &self.cfg.paths;
        let files: Vec<PathBuf> = [&p.registry, &p.lexicons, &p.source_maps].into_iter().flatten().cloned().collect();
        digests(&files, &self.out)
    }

    /// Generates the synthetic corpus, its source metadata and word vectors.
    pub fn synth_gen(&self) -> Result<StageReport> {
        let stage = "synth-gen";
        let syn = &self.cfg.synthetic;
        let spec = syn.resolved_spec();
        let key = stage_key(
            stage,
            serde_json::json!({ "spec": spec, "embeddings": syn.embeddings, "seed": syn.seed }),
            &self.config_inputs()?,
        )?;
        if Manifest::is_current(&self.out, stage, &key) {
            return Ok(self.report(stage, StageStatus::Skipped, "synthetic corpus up to date".into()));
        }
        let corpus = generate_synthetic_corpus(&spec, syn.seed)?;
        let table = generate_synthetic_embeddings(&spec, &syn.embeddings, syn.seed)?;
        let (articles, sources, vectors) = (self.corpus_path(), self.sources_path(), self.path("corpus/embeddings.vec"));
        ensure_parent(&articles)?;
        save_corpus(&corpus, &articles, &sources)?;
        table.save(&vectors)?;
        let mut m = self.manifest(stage, key, vec![syn.seed], self.config_inputs()?, &[articles, sources, vectors])?;
        m.embedding_checksum = Some(table.checksum().to_string());
        let (pos, neg) = corpus.class_counts();
        m.notes.insert("articles".into(), corpus.articles.len().into());
        m.notes.insert("propaganda".into(), pos.into());
        m.notes.insert("mainstream".into(), neg.into());
        m.write(&self.out)?;
        Ok(self.report(
            stage,
            StageStatus::Ran,
            format!("{} articles ({pos} propaganda, {neg} mainstream), {} word vectors", corpus.articles.len(), table.len()),
        ))
    }

    /// Validates an external corpus and copies it into the output directory.
    pub fn ingest(&self) -> Result<StageReport> {
        let stage = "ingest";
        let (Some(src), Some(meta)) = (&self.cfg.paths.corpus, &self.cfg.paths.sources) else {
            return Err(CliError::Config(vec!["ingest needs paths.corpus and paths.sources".into()]));
        };
        let mut inputs = digests(&[src.clone(), meta.clone()], &self.out)?;
        inputs.extend(self.config_inputs()?);
        let key = stage_key(stage, serde_json::Value::Null, &inputs)?;
        if Manifest::is_current(&self.out, stage, &key) {
            return Ok(self.report(stage, StageStatus::Skipped, "corpus up to date".into()));
        }
        let corpus = load_corpus_with(src, meta, &self.registry)?;
        let (articles, sources) = (self.corpus_path(), self.sources_path());
        ensure_parent(&articles)?;
        save_corpus(&corpus, &articles, &sources)?;
        let mut m = self.manifest(stage, key, Vec::new(), inputs, &[articles, sources])?;
        m.notes.insert("articles".into(), corpus.articles.len().into());
        m.write(&self.out)?;
        Ok(self.report(stage, StageStatus::Ran, format!("{} articles ingested", corpus.articles.len())))
    }

    /// Runs whichever of `ingest` / `synth-gen` the config calls for.
    pub fn ensure_corpus(&self) -> Result<StageReport> {
        if self.cfg.paths.corpus.is_some() {
            self.ingest()
        } else {
            self.synth_gen()
        }
    }

    fn load_raw_corpus(&self) -> Result<Corpus> {
        Ok(load_corpus_with(&self.corpus_path(), &self.sources_path(), &self.registry)?)
    }

    pub fn annotate(&self) -> Result<StageReport> {
        let stage = "annotate";
        self.ensure_corpus()?;
        let ann = &self.cfg.annotator;
        let mut inputs = digests(&[self.corpus_path(), self.sources_path()], &self.out)?;
        inputs.extend(self.config_inputs()?);
        let endpoint_url = ann.endpoint.as_ref().map(|e| e.base_url.clone());
        let settings = serde_json::json!({
            "offline": ann.offline,
            "endpoint": if ann.offline { None } else { endpoint_url },
            "overwrite": ann.overwrite,
            "registry": self.registry.version,
        });
        let key = stage_key(stage, settings, &inputs)?;
        if Manifest::is_current(&self.out, stage, &key) {
            return Ok(self.report(stage, StageStatus::Skipped, "annotations up to date, nothing to do".into()));
        }
        let mut corpus = self.load_raw_corpus()?;
        let cache_path = self.path("annotate/cache.jsonl");
        ensure_parent(&cache_path)?;
        let mut cache = AnnotationCache::open(&cache_path)?;
        let annotator: Box<dyn Annotator> = if ann.offline {
            Box::new(OfflineAnnotator::new(&self.cfg.lexicons()?, &self.registry)?)
        } else {
            let ep = ann.endpoint.clone().expect("validated").with_token_from_env();
            Box::new(RemoteAnnotator::new(ep, &self.registry))
        };
        let summary = annotate_corpus(&mut corpus, annotator.as_ref(), &mut cache, ann.overwrite)?;
        if let Some((id, e)) = summary.failed.first() {
            return Err(CliError::Annotation {
                failed: summary.failed.len(),
                first: format!("{id}: {e}"),
            });
        }
        let articles = self.annotated_path();
        let stats = self.path("annotate/statistics.csv");
        propdet_core::corpus::write_jsonl(&articles, &corpus.articles)?;
        corpus_statistics(&corpus, &self.registry)?.write_csv(&stats)?;
        let mut m = self.manifest(stage, key, Vec::new(), inputs, &[articles, stats])?;
        m.notes.insert("kept".into(), summary.kept.into());
        m.notes.insert("from_cache".into(), summary.from_cache.into());
        m.notes.insert("annotated".into(), summary.annotated.into());
        m.notes.insert("annotator".into(), annotator.annotator_id().into());
        m.write(&self.out)?;
        Ok(self.report(
            stage,
            StageStatus::Ran,
            format!(
                "{} annotated, {} from cache, {} already annotated",
                summary.annotated, summary.from_cache, summary.kept
            ),
        ))
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        self.annotate()?;
        Ok(load_corpus_with(&self.annotated_path(), &self.sources_path(), &self.registry)?)
    }

    /// Writes one feature matrix per configured mode.
    pub fn featurize(&self) -> Result<Vec<StageReport>> {
        self.annotate()?;
        let emb_path = self.embeddings_path();
        require(&emb_path, "synth-gen")?;
        let mut inputs = digests(&[self.annotated_path(), self.sources_path(), emb_path.clone()], &self.out)?;
        inputs.extend(self.config_inputs()?);
        let mut table: Option<Embeddings> = None;
        let mut corpus: Option<Corpus> = None;
        let mut reports = Vec::new();
        for &mode in &self.cfg.modes {
            let stage = format!("featurize-{mode}");
            let f = &self.cfg.features;
            let settings = serde_json::json!({
                "mode": mode,
                "dimension": f.dimension,
                "oov": f.oov,
                "per_1000_tokens": f.per_1000_tokens,
            });
            let key = stage_key(&stage, settings, &inputs)?;
            if Manifest::is_current(&self.out, &stage, &key) {
                reports.push(self.report(&stage, StageStatus::Skipped, format!("{mode} features up to date")));
                continue;
            }
            if table.is_none() {
                table = Some(load_embeddings::<f64>(&emb_path, f.dimension, f.oov)?);
                corpus = Some(load_corpus_with(&self.annotated_path(), &self.sources_path(), &self.registry)?);
            }
            let (table, corpus) = (table.as_ref().expect("loaded"), corpus.as_ref().expect("loaded"));
            let options = FuseOptions {
                per_1000_tokens: f.per_1000_tokens,
            };
            let matrix = featurize_corpus(corpus, table, mode, options, &self.registry)?;
            let path = self.features_path(mode);
            ensure_parent(&path)?;
            matrix.write_binary(&path)?;
            let mut m = self.manifest(&stage, key, Vec::new(), inputs.clone(), &[path])?;
            m.embedding_checksum = Some(table.checksum().to_string());
            m.notes.insert("rows".into(), matrix.len().into());
            m.notes.insert("width".into(), matrix.layout.len().into());
            m.write(&self.out)?;
            reports.push(self.report(
                &stage,
                StageStatus::Ran,
                format!("{mode}: {} x {}", matrix.len(), matrix.layout.len()),
            ));
        }
        Ok(reports)
    }

    pub fn load_features(&self) -> Result<BTreeMap<FeatureMode, Features>> {
        self.featurize()?;
        self.cfg
            .modes
            .iter()
            .map(|&m| Ok((m, Features::read_binary(&self.features_path(m))?)))
            .collect()
    }

    /// Writes and verifies one assignment per configured split strategy.
    pub fn split(&self) -> Result<StageReport> {
        let stage = "split";
        self.ensure_corpus()?;
        let specs = self.cfg.split_specs()?;
        let inputs = digests(&[self.corpus_path(), self.sources_path()], &self.out)?;
        let key = stage_key(stage, serde_json::to_value(&specs)?, &inputs)?;
        if Manifest::is_current(&self.out, stage, &key) {
            return Ok(self.report(stage, StageStatus::Skipped, "splits up to date".into()));
        }
        let corpus = self.load_raw_corpus()?;
        let mut outputs = Vec::new();
        let mut lines = Vec::new();
        let mut failed = None;
        for spec in &specs {
            let assignment = make_split(&corpus, spec)?;
            let report = verify_assignment(&assignment, &corpus);
            let path = self.split_path(spec);
            ensure_parent(&path)?;
            assignment.write_jsonl(&path)?;
            let report_path = self.path(&format!("splits/{}.verify.json", spec.kind));
            write_file(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            if let Some(c) = report.checks.iter().find(|c| !c.passed) {
                failed.get_or_insert((spec.kind.to_string(), format!("{}: {}", c.name, c.detail)));
            }
            lines.push(format!(
                "{} {}/{}/{}",
                spec.kind,
                assignment.count(SplitSet::Train),
                assignment.count(SplitSet::Valid),
                assignment.count(SplitSet::Test)
            ));
            outputs.push(path);
            outputs.push(report_path);
        }
        if let Some((kind, detail)) = failed {
            return Err(CliError::Verification { kind, detail });
        }
        let m = self.manifest(stage, key, Vec::new(), inputs, &outputs)?;
        m.write(&self.out)?;
        Ok(self.report(stage, StageStatus::Ran, format!("train/valid/test: {}", lines.join(", "))))
    }

    pub fn load_assignment(&self, spec: &SplitSpec) -> Result<SplitAssignment> {
        self.split()?;
        Ok(SplitAssignment::read_jsonl(&self.split_path(spec), spec.clone())?)
    }

    fn cells(&self) -> Result<Vec<(SplitSpec, FeatureMode, u64)>> {
        let mut cells = Vec::new();
        for spec in self.cfg.split_specs()? {
            for &mode in &self.cfg.modes {
                for &seed in &self.cfg.seeds {
                    cells.push((spec.clone(), mode, seed));
                }
            }
        }
        Ok(cells)
    }

    /// Trains one model per (split, mode, seed) on the train set, early-stopping on valid.
    pub fn train(&self) -> Result<StageReport> {
        let stage = "train";
        let features = self.load_features()?;
        self.split()?;
        let cells = self.cells()?;
        let mut files: Vec<PathBuf> = self.cfg.modes.iter().map(|&m| self.features_path(m)).collect();
        files.extend(self.cfg.split_specs()?.iter().map(|s| self.split_path(s)));
        let inputs = digests(&files, &self.out)?;
        let settings = serde_json::json!({
            "cells": cells.iter().map(|(s, m, seed)| cell_name(s, *m, *seed)).collect::<Vec<_>>(),
            "train": self.cfg.train,
        });
        let key = stage_key(stage, settings, &inputs)?;
        if Manifest::is_current(&self.out, stage, &key) {
            return Ok(self.report(stage, StageStatus::Skipped, format!("{} models up to date", cells.len())));
        }
        let mut outputs = Vec::new();
        for (spec, mode, seed) in &cells {
            let assignment = self.load_assignment(spec)?;
            let matrix = &features[mode];
            let tr = matrix.select(&assignment.positions(&matrix.ids, SplitSet::Train)?);
            let va = matrix.select(&assignment.positions(&matrix.ids, SplitSet::Valid)?);
            let mut config = self.cfg.train.clone();
            config.seed = *seed;
            let (model, history) = train(&tr, &va, &config)?;
            let path = self.model_path(spec, *mode, *seed);
            ensure_parent(&path)?;
            save_model(&path, &model, &ModelProvenance::of(matrix))?;
            let hist = path.with_extension("history.csv");
            history.write_csv(&hist)?;
            log::info!(
                "{}: best epoch {} of {}",
                cell_name(spec, *mode, *seed),
                history.best_epoch,
                history.stopped_epoch()
            );
            outputs.push(path);
            outputs.push(hist);
        }
        let m = self.manifest(stage, key, self.cfg.seeds.clone(), inputs, &outputs)?;
        m.write(&self.out)?;
        Ok(self.report(stage, StageStatus::Ran, format!("{} models trained", cells.len())))
    }

    /// Scores every trained model on its test set.
    pub fn evaluate(&self) -> Result<StageReport> {
        let stage = "evaluate";
        self.train()?;
        let features = self.load_features()?;
        let cells = self.cells()?;
        let mut inputs = Vec::new();
        let mut records = Vec::new();
        for (spec, mode, seed) in &cells {
            let path = self.model_path(spec, *mode, *seed);
            require(&path, "train")?;
            let d = digest(&path, &self.out)?;
            let saved = load_model::<f64>(&path)?;
            let matrix = &features[mode];
            saved.provenance.check_compatible(matrix)?;
            let assignment = self.load_assignment(spec)?;
            let te = matrix.select(&assignment.positions(&matrix.ids, SplitSet::Test)?);
            let scores = saved.model.scores(te.view())?;
            let metrics = compute_metrics(scores.as_slice().expect("contiguous"), &te.labels_u8(), self.cfg.train.threshold)?;
            records.push(RunRecord {
                split: spec.kind,
                mode: *mode,
                seed: *seed,
                metrics: Some(metrics),
                error: None,
                model_path: Some(display_path(&path, &self.out)),
                best_epoch: 0,
                stopped_epoch: 0,
                fingerprint: d.sha256.clone(),
            });
            inputs.push(d);
        }
        let key = stage_key(stage, serde_json::json!({ "threshold": self.cfg.train.threshold }), &inputs)?;
        let results = self.path("evaluate/results.csv");
        let metrics = self.path("evaluate/metrics.jsonl");
        write_file(&results, &results_csv(&records))?;
        ensure_parent(&metrics)?;
        propdet_core::corpus::write_jsonl(&metrics, &records)?;
        let m = self.manifest(stage, key, self.cfg.seeds.clone(), inputs, &[results, metrics])?;
        m.write(&self.out)?;
        Ok(self.report(stage, StageStatus::Ran, format!("{} models evaluated", records.len())))
    }

    fn grid_config(&self, modes: Vec<FeatureMode>, model_dir: Option<PathBuf>) -> Result<GridConfig> {
        Ok(GridConfig {
            splits: self.cfg.split_specs()?,
            modes,
            seeds: self.cfg.seeds.clone(),
            train: self.cfg.train.clone(),
            workers: self.cfg.workers,
            model_dir,
        })
    }

    fn write_summary(&self, dir: &str, records: &[RunRecord]) -> Result<(Summary, Vec<PathBuf>)> {
        let summary = aggregate(records)?;
        let dir = self.path(dir);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        summary.write_csvs(&dir)?;
        let results = dir.join("results.csv");
        let table = dir.join("table.txt");
        write_file(&results, &results_csv(records))?;
        write_file(&table, &summary.render_table())?;
        let outputs = vec![results, dir.join("summary_cells.csv"), dir.join("summary_modes.csv"), table];
        Ok((summary, outputs))
    }

    /// The full split x mode x seed grid, resumable through the record store.
    pub fn ablate(&self) -> Result<(StageReport, Summary)> {
        let stage = "ablate";
        let features = self.load_features()?;
        let corpus = self.load_corpus()?;
        let model_dir = self.cfg.report.save_models.then(|| self.path("ablate/models"));
        let grid = self.grid_config(self.cfg.modes.clone(), model_dir)?;
        let inputs = digests(
            &self.cfg.modes.iter().map(|&m| self.features_path(m)).collect::<Vec<_>>(),
            &self.out,
        )?;
        let records = run_ablation_grid(&corpus, &features, &grid, Some(&self.records_path()), None)?;
        let failed = records.iter().filter(|r| !r.is_complete()).count();
        if failed > 0 {
            write_file(&self.path("ablate/results.csv"), &results_csv(&records))?;
            return Err(CliError::GridFailures(failed));
        }
        let (summary, outputs) = self.write_summary("ablate", &records)?;
        let settings = serde_json::json!({
            "splits": grid.splits,
            "modes": grid.modes,
            "seeds": grid.seeds,
            "train": grid.train,
        });
        let key = stage_key(stage, settings, &inputs)?;
        let mut m = self.manifest(stage, key, self.cfg.seeds.clone(), inputs, &outputs)?;
        m.notes.insert("cells".into(), records.len().into());
        m.notes.insert(
            "cell_fingerprints".into(),
            serde_json::to_value(records.iter().map(|r| &r.fingerprint).collect::<Vec<_>>())?,
        );
        m.write(&self.out)?;
        let report = self.report(stage, StageStatus::Ran, format!("{} cells complete", records.len()));
        Ok((report, summary))
    }

    /// Grouped Shapley attributions of the configured explanation mode on every split's
    /// test set, one model per seed, averaged over seeds.
    pub fn explain(&self) -> Result<(StageReport, Vec<(String, Vec<(FeatureGroup, f64)>)>)> {
        let stage = "explain";
        let mode = self.cfg.explain.mode;
        let sub = Pipeline {
            cfg: RunConfig {
                modes: vec![mode],
                ..self.cfg.clone()
            },
            out: self.out.clone(),
            registry: self.registry.clone(),
        };
        let features = sub.load_features()?;
        let corpus = sub.load_corpus()?;
        let grid = sub.grid_config(vec![mode], None)?;
        let policy = self.cfg.explain.baseline;
        let found: Mutex<Vec<(usize, u64, std::result::Result<SplitExplanation, String>)>> = Mutex::new(Vec::new());
        let split_index: BTreeMap<_, _> = grid.splits.iter().enumerate().map(|(i, s)| (s.kind, i)).collect();
        let observer = |c: CellOutcome<'_, f64>| {
            let run = || -> propdet_core::Result<SplitExplanation> {
                let train_rows = c.features.select(&c.assignment.positions(&c.features.ids, SplitSet::Train)?);
                let test = c.features.select(&c.assignment.positions(&c.features.ids, SplitSet::Test)?);
                let base = baseline_vector(policy, &train_rows);
                explain_split(&format!("{}:{}", c.split.kind, c.seed), c.model, &test, &base)
            };
            let res = run().map_err(|e| e.to_string());
            found.lock().expect("explanations").push((split_index[&c.split.kind], c.seed, res));
        };
        let records = run_ablation_grid(&corpus, &features, &grid, None, Some(&observer))?;
        let failed = records.iter().filter(|r| !r.is_complete()).count();
        if failed > 0 {
            return Err(CliError::GridFailures(failed));
        }
        let mut found = found.into_inner().expect("explanations");
        found.sort_by_key(|(i, seed, _)| (*i, *seed));
        let mut per_seed = Vec::new();
        for (_, _, r) in found {
            per_seed.push(r.map_err(|e| CliError::Core(propdet_core::Error::Split(e)))?);
        }
        let mut averaged = Vec::new();
        for spec in &grid.splits {
            let prefix = format!("{}:", spec.kind);
            let of_split: Vec<&SplitExplanation> = per_seed.iter().filter(|e| e.split.starts_with(&prefix)).collect();
            let mut sums: Vec<(FeatureGroup, f64)> = of_split[0].mean_abs.iter().map(|(g, _)| (*g, 0.0)).collect();
            for e in &of_split {
                for (slot, (_, v)) in sums.iter_mut().zip(&e.mean_abs) {
                    slot.1 += v / of_split.len() as f64;
                }
            }
            averaged.push((spec.kind.to_string(), sums));
        }
        let dir = self.path("explain");
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let (per_seed_csv, samples) = (dir.join("per_seed.csv"), dir.join("attributions.jsonl"));
        write_explanations(&per_seed, &per_seed_csv, &samples)?;
        let importance = dir.join("group_importance.csv");
        write_file(&importance, &importance_csv(&averaged))?;
        let inputs = digests(&[self.features_path(mode)], &self.out)?;
        let settings = serde_json::json!({
            "splits": grid.splits,
            "mode": mode,
            "seeds": grid.seeds,
            "train": grid.train,
            "baseline": policy,
        });
        let key = stage_key(stage, settings, &inputs)?;
        let m = self.manifest(stage, key, self.cfg.seeds.clone(), inputs, &[importance, per_seed_csv, samples])?;
        m.write(&self.out)?;
        let msg = averaged
            .iter()
            .map(|(split, groups)| {
                let top = groups.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|g| g.0.as_str()).unwrap_or("-");
                format!("{split}: {top}")
            })
            .collect::<Vec<_>>()
            .join(", ");
        Ok((self.report(stage, StageStatus::Ran, format!("largest group per split: {msg}")), averaged))
    }

    /// Results table and CSVs from the ablation record store, plus group importances when
    /// `explain` has run.
    pub fn report_stage(&self) -> Result<(StageReport, String)> {
        let stage = "report";
        require(&self.records_path(), "ablate")?;
        let features = self.load_features()?;
        let corpus = self.load_corpus()?;
        let grid = self.grid_config(self.cfg.modes.clone(), None)?;
        // Every cell is already in the store, so this only reads it back in grid order.
        let records = run_ablation_grid(&corpus, &features, &grid, Some(&self.records_path()), None)?;
        let (summary, mut outputs) = self.write_summary("report", &records)?;
        let mut text = summary.render_table();
        let importance = self.path("explain/group_importance.csv");
        if importance.is_file() {
            let body = std::fs::read_to_string(&importance).map_err(|e| io_err(&importance, e))?;
            let _ = write!(text, "\nMean |attribution| per feature group\n{body}");
            let copy = self.path("report/group_importance.csv");
            write_file(&copy, &body)?;
            outputs.push(copy);
        }
        write_file(&self.path("report/table.txt"), &text)?;
        let inputs = vec![digest(&self.records_path(), &self.out)?];
        let key = stage_key(stage, serde_json::Value::Null, &inputs)?;
        let m = self.manifest(stage, key, self.cfg.seeds.clone(), inputs, &outputs)?;
        m.write(&self.out)?;
        Ok((self.report(stage, StageStatus::Ran, format!("{} cells summarised", records.len())), text))
    }
}

/// `split,group,mean_abs_value`, seed-averaged.
pub fn importance_csv(rows: &[(String, Vec<(FeatureGroup, f64)>)]) -> String {
    let mut out = String::from("split,group,mean_abs_value\n");
    for (split, groups) in rows {
        for (g, v) in groups {
            let _ = writeln!(out, "{split},{g},{v:.6}");
        }
    }
    out
}
