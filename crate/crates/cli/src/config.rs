//! The run configuration: one JSON file describing the whole pipeline, plus flag overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use propdet_core::annotate::{AnnotatorEndpoint, LexiconSet, TechniqueRegistry};
use propdet_core::corpus::synthetic::{SyntheticEmbeddingSpec, SyntheticSpec};
use propdet_core::explain::BaselinePolicy;
use propdet_core::features::{FeatureMode, OovPolicy, DEFAULT_DIMENSION};
use propdet_core::model::TrainConfig;
use propdet_core::splits::{SourceMaps, SplitKind, SplitSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Article JSONL. Leave unset to work from a generated synthetic corpus.
    pub corpus: Option<PathBuf>,
    /// Source metadata JSONL; required together with `corpus`.
    pub sources: Option<PathBuf>,
    /// Word vectors in text format. Unset means the synthetic table written by `synth-gen`.
    pub embeddings: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub source_maps: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            sources: None,
            embeddings: None,
            lexicons: None,
            registry: None,
            source_maps: None,
            out: PathBuf::from("propdet-out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticPreset {
    /// Full-sized corpus (4223 articles); text separates the classes on every split.
    FullScale,
    /// Corpus whose text signal does not survive the source shifts, while persuasion
    /// counts do.
    #[default]
    RobustnessDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticOptions {
    pub preset: SyntheticPreset,
    /// Full spec; takes precedence over `preset`.
    pub spec: Option<SyntheticSpec>,
    pub embeddings: SyntheticEmbeddingSpec,
    pub seed: u64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            preset: SyntheticPreset::default(),
            spec: None,
            embeddings: SyntheticEmbeddingSpec::default(),
            seed: 42,
        }
    }
}

impl SyntheticOptions {
    pub fn resolved_spec(&self) -> SyntheticSpec {
        match (&self.spec, self.preset) {
            (Some(s), _) => s.clone(),
            (None, SyntheticPreset::FullScale) => SyntheticSpec::full_scale(),
            (None, SyntheticPreset::RobustnessDemo) => SyntheticSpec::robustness_demo(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub offline: bool,
    /// Remote service settings. The credential comes from the environment only.
    pub endpoint: Option<AnnotatorEndpoint>,
    /// Re-annotate articles that already carry an annotation.
    pub overwrite: bool,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            offline: true,
            endpoint: None,
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub dimension: usize,
    pub oov: OovPolicy,
    pub per_1000_tokens: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            dimension: DEFAULT_DIMENSION,
            oov: OovPolicy::Skip,
            per_1000_tokens: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainOptions {
    pub baseline: BaselinePolicy,
    pub mode: FeatureMode,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            baseline: BaselinePolicy::TrainMean,
            mode: FeatureMode::Hybrid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Print the results table on stdout as well as writing it.
    pub print_table: bool,
    /// Keep one model file per grid cell.
    pub save_models: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            print_table: true,
            save_models: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub synthetic: SyntheticOptions,
    pub annotator: AnnotatorConfig,
    pub features: FeatureOptions,
    pub modes: Vec<FeatureMode>,
    /// Unset means all four strategies with the configured (or bundled) source maps.
    pub splits: Option<Vec<SplitSpec>>,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub explain: ExplainOptions,
    pub report: ReportOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            synthetic: SyntheticOptions::default(),
            annotator: AnnotatorConfig::default(),
            features: FeatureOptions::default(),
            modes: FeatureMode::ALL.to_vec(),
            splits: None,
            split_seed: 0,
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            workers: 1,
            explain: ExplainOptions::default(),
            report: ReportOptions::default(),
        }
    }
}

/// Command-line values that replace the corresponding config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub modes: Vec<FeatureMode>,
    pub splits: Vec<SplitKind>,
    pub workers: Option<usize>,
    pub offline: bool,
    pub endpoint: Option<String>,
    pub threshold: Option<f64>,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.rebase(base);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if !o.modes.is_empty() {
            self.modes = o.modes.clone();
        }
        if !o.splits.is_empty() {
            let current = self.split_specs()?;
            let maps = self.source_maps()?;
            self.splits = Some(
                o.splits
                    .iter()
                    .map(|&kind| {
                        current
                            .iter()
                            .find(|s| s.kind == kind)
                            .cloned()
                            .unwrap_or_else(|| SplitSpec::with_maps(kind, self.split_seed, &maps))
                    })
                    .collect(),
            );
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(url) = &o.endpoint {
            let mut ep = self.annotator.endpoint.clone().unwrap_or_default();
            ep.base_url = url.clone();
            self.annotator.endpoint = Some(ep);
            self.annotator.offline = false;
        }
        if o.offline {
            self.annotator.offline = true;
        }
        if let Some(t) = o.threshold {
            self.train.threshold = t;
        }
        Ok(())
    }

    /// Every violated constraint; empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let p = &self.paths;
        match (&p.corpus, &p.sources) {
            (Some(_), None) => v.push("paths.sources is required when paths.corpus is set".into()),
            (None, Some(_)) => v.push("paths.corpus is required when paths.sources is set".into()),
            _ => {}
        }
        for (name, path) in [
            ("paths.corpus", &p.corpus),
            ("paths.sources", &p.sources),
            ("paths.embeddings", &p.embeddings),
            ("paths.lexicons", &p.lexicons),
            ("paths.registry", &p.registry),
            ("paths.source_maps", &p.source_maps),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    v.push(format!("{name}: {} does not exist", path.display()));
                }
            }
        }
        if p.corpus.is_some() && p.embeddings.is_none() {
            v.push("paths.embeddings is required for an external corpus".into());
        }
        if p.out.as_os_str().is_empty() {
            v.push("paths.out is empty".into());
        }
        if p.corpus.is_none() {
            if let Err(e) = self.synthetic.resolved_spec().validate() {
                v.push(format!("synthetic: {e}"));
            }
            if self.synthetic.embeddings.dimension != self.features.dimension {
                v.push(format!(
                    "synthetic.embeddings.dimension {} differs from features.dimension {}",
                    self.synthetic.embeddings.dimension, self.features.dimension
                ));
            }
        }
        if self.features.dimension == 0 {
            v.push("features.dimension must be >= 1".into());
        }
        if self.modes.is_empty() {
            v.push("modes is empty".into());
        }
        if self.modes.iter().collect::<BTreeSet<_>>().len() != self.modes.len() {
            v.push("modes lists a mode twice".into());
        }
        if self.seeds.is_empty() {
            v.push("seeds is empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            v.push("seeds lists a seed twice".into());
        }
        if self.workers == 0 {
            v.push("workers must be >= 1".into());
        }
        v.extend(self.train.violations().into_iter().map(|m| format!("train.{m}")));
        if let Some(specs) = &self.splits {
            if specs.is_empty() {
                v.push("splits is empty".into());
            }
            if specs.iter().map(|s| s.kind).collect::<BTreeSet<_>>().len() != specs.len() {
                v.push("splits lists a strategy twice".into());
            }
            for s in specs {
                let sum: f64 = s.ratios.iter().sum();
                if s.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
                    v.push(format!("splits.{}: ratios {:?} must be in [0, 1] and sum to 1", s.kind, s.ratios));
                }
            }
        }
        if !self.annotator.offline {
            match &self.annotator.endpoint {
                None => v.push("annotator.endpoint is required unless annotator.offline is true".into()),
                Some(ep) if ep.base_url.is_empty() => v.push("annotator.endpoint.base_url is empty".into()),
                Some(_) => {}
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    /// SHA-256 of the canonical JSON form, leaving out the output directory so that the
    /// same experiment run into two directories has one fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.paths.out = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn registry(&self) -> Result<TechniqueRegistry> {
        Ok(match &self.paths.registry {
            Some(p) => TechniqueRegistry::load(p)?,
            None => TechniqueRegistry::default(),
        })
    }

    pub fn lexicons(&self) -> Result<LexiconSet> {
        Ok(match &self.paths.lexicons {
            Some(p) => LexiconSet::load(p)?,
            None => LexiconSet::bundled(),
        })
    }

    pub fn source_maps(&self) -> Result<SourceMaps> {
        Ok(match &self.paths.source_maps {
            Some(p) => SourceMaps::load(p)?,
            None => SourceMaps::default(),
        })
    }

    pub fn split_specs(&self) -> Result<Vec<SplitSpec>> {
        if let Some(s) = &self.splits {
            return Ok(s.clone());
        }
        let maps = self.source_maps()?;
        Ok(SplitKind::ALL
            .iter()
            .map(|&k| SplitSpec::with_maps(k, self.split_seed, &maps))
            .collect())
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.corpus,
            &mut self.sources,
            &mut self.embeddings,
            &mut self.lexicons,
            &mut self.registry,
            &mut self.source_maps,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
