//! Train / valid / test partitions: random, by source, by political leaning, by credibility.
//!
//! Source-driven strategies resolve each source to a [`SourceRole`]. `Shared` pools are divided
//! article by article between valid and test (seeded, half each); PPN articles in the
//! leaning and credibility strategies are drawn 80/10/10 across the three sets.

mod verify;

pub use verify::{verify_assignment, Check, VerificationReport};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus, CorpusKind, Credibility, Leaning};
use crate::error::{Error, Result};

const DEFAULT_SOURCE_MAPS: &str = include_str!("../../data/source_maps.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Random,
    Sources,
    Political,
    Credibility,
}

impl SplitKind {
    pub const ALL: [SplitKind; 4] = [SplitKind::Random, SplitKind::Sources, SplitKind::Political, SplitKind::Credibility];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Random => "random",
            SplitKind::Sources => "sources",
            SplitKind::Political => "political",
            SplitKind::Credibility => "credibility",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            SplitKind::Random => "Random",
            SplitKind::Sources => "Sources",
            SplitKind::Political => "Political",
            SplitKind::Credibility => "Credibility",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SplitKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown split kind {s:?} (random, sources, political, credibility)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSet {
    Train,
    Valid,
    Test,
}

impl SplitSet {
    pub const ALL: [SplitSet; 3] = [SplitSet::Train, SplitSet::Valid, SplitSet::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitSet::Train => "train",
            SplitSet::Valid => "valid",
            SplitSet::Test => "test",
        }
    }
}

impl fmt::Display for SplitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a source's articles go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceRole {
    Train,
    Valid,
    Test,
    /// Divided between valid and test at article level.
    Shared,
    Excluded,
}

/// Bundled source maps: the full Sources mapping and per-strategy overrides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMaps {
    pub sources: BTreeMap<String, SourceRole>,
    #[serde(default)]
    pub political: BTreeMap<String, SourceRole>,
    #[serde(default)]
    pub credibility: BTreeMap<String, SourceRole>,
}

impl Default for SourceMaps {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SOURCE_MAPS).expect("bundled source maps parse")
    }
}

impl SourceMaps {
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    fn for_kind(&self, kind: SplitKind) -> Option<BTreeMap<String, SourceRole>> {
        match kind {
            SplitKind::Random => None,
            SplitKind::Sources => Some(self.sources.clone()),
            SplitKind::Political => Some(self.political.clone()),
            SplitKind::Credibility => Some(self.credibility.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitKind,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    /// Full mapping for `Sources`; overrides of the metadata-derived role for `Political`
    /// and `Credibility`; unused for `Random`.
    #[serde(default)]
    pub source_assignments: Option<BTreeMap<String, SourceRole>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

impl SplitSpec {
    pub fn new(kind: SplitKind, seed: u64) -> Self {
        SplitSpec {
            kind,
            ratios: default_ratios(),
            source_assignments: None,
            seed,
        }
    }

    /// Spec using the bundled source map for `kind`.
    pub fn with_default_map(kind: SplitKind, seed: u64) -> Self {
        SplitSpec {
            source_assignments: SourceMaps::default().for_kind(kind),
            ..Self::new(kind, seed)
        }
    }

    pub fn with_maps(kind: SplitKind, seed: u64, maps: &SourceMaps) -> Self {
        SplitSpec {
            source_assignments: maps.for_kind(kind),
            ..Self::new(kind, seed)
        }
    }

    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios {:?} must be in [0,1] and sum to 1", self.ratios)));
        }
        if let Some(map) = &self.source_assignments {
            let unknown: Vec<&str> = map
                .keys()
                .filter(|s| corpus.source_meta(s).is_none())
                .map(String::as_str)
                .collect();
            if !unknown.is_empty() {
                return Err(Error::Split(format!("source map names unknown sources: {}", unknown.join(", "))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub id: String,
    pub set: SplitSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub spec: SplitSpec,
    /// In corpus order.
    pub records: Vec<AssignmentRecord>,
    /// Articles left out of every set.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn ids(&self, set: SplitSet) -> Vec<&str> {
        self.records.iter().filter(|r| r.set == set).map(|r| r.id.as_str()).collect()
    }

    pub fn count(&self, set: SplitSet) -> usize {
        self.records.iter().filter(|r| r.set == set).count()
    }

    pub fn set_of(&self) -> BTreeMap<&str, SplitSet> {
        self.records.iter().map(|r| (r.id.as_str(), r.set)).collect()
    }

    /// Row positions of `set` members within `ids` (e.g. a feature matrix's id column).
    pub fn positions(&self, ids: &[String], set: SplitSet) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        self.records
            .iter()
            .filter(|r| r.set == set)
            .map(|r| {
                index
                    .get(r.id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Split(format!("assigned article {:?} has no feature row", r.id)))
            })
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.records)
    }

    /// Reads `{"id","set"}` lines; the spec is supplied by the caller (it lives in the run config).
    pub fn read_jsonl(path: &Path, spec: SplitSpec) -> Result<Self> {
        Ok(SplitAssignment {
            spec,
            records: read_jsonl(path)?,
            excluded: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

/// Sizes `round(r_train * n)`, `round(r_valid * n)` and the remainder.
pub fn set_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((ratios[0] * n as f64).round() as usize).min(n);
    let valid = ((ratios[1] * n as f64).round() as usize).min(n - train);
    [train, valid, n - train - valid]
}

fn pool_rng(seed: u64, pool: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pool);
    rng
}

/// Shuffles `members` and deals them out in `ratios` proportions.
fn deal(members: &[usize], ratios: [f64; 3], rng: &mut ChaCha8Rng, out: &mut [Option<SplitSet>]) {
    let mut order = members.to_vec();
    order.shuffle(rng);
    let [train, valid, _] = set_sizes(order.len(), ratios);
    for (k, &i) in order.iter().enumerate() {
        out[i] = Some(if k < train {
            SplitSet::Train
        } else if k < train + valid {
            SplitSet::Valid
        } else {
            SplitSet::Test
        });
    }
}

const PPN_POOL: u64 = 1;
const SHARED_POOL: u64 = 2;
const RANDOM_POOL: u64 = 3;

fn finish(corpus: &Corpus, spec: &SplitSpec, sets: Vec<Option<SplitSet>>, warnings: Vec<String>) -> Result<SplitAssignment> {
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    for (a, set) in corpus.articles.iter().zip(sets) {
        match set {
            Some(set) => records.push(AssignmentRecord { id: a.id.clone(), set }),
            None => excluded.push(a.id.clone()),
        }
    }
    let assignment = SplitAssignment {
        spec: spec.clone(),
        records,
        excluded,
        warnings,
    };
    let train_ids: BTreeSet<&str> = assignment.ids(SplitSet::Train).into_iter().collect();
    for set in SplitSet::ALL {
        if assignment.count(set) == 0 {
            return Err(Error::Split(format!("{} split leaves the {set} set empty", spec.kind)));
        }
    }
    let labels: BTreeSet<_> = corpus
        .articles
        .iter()
        .filter(|a| train_ids.contains(a.id.as_str()))
        .map(|a| a.label)
        .collect();
    if labels.len() < 2 {
        return Err(Error::Split(format!("{} split leaves a single class in train", spec.kind)));
    }
    for w in &assignment.warnings {
        log::warn!("{w}");
    }
    Ok(assignment)
}

pub fn split_random(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment> {
    spec.validate(corpus)?;
    let n = corpus.articles.len();
    if set_sizes(n, spec.ratios).contains(&0) {
        return Err(Error::Split(format!("{n} articles are too few for non-empty sets at ratios {:?}", spec.ratios)));
    }
    let mut sets = vec![None; n];
    let all: Vec<usize> = (0..n).collect();
    deal(&all, spec.ratios, &mut pool_rng(spec.seed, RANDOM_POOL), &mut sets);
    finish(corpus, spec, sets, Vec::new())
}

/// Applies per-source roles; `Shared` members are split half/half between valid and test.
fn apply_roles(
    corpus: &Corpus,
    spec: &SplitSpec,
    role_of: &BTreeMap<&str, SourceRole>,
    sets: &mut [Option<SplitSet>],
) {
    let mut shared = Vec::new();
    for (i, a) in corpus.articles.iter().enumerate() {
        match role_of.get(a.source.as_str()) {
            Some(SourceRole::Train) => sets[i] = Some(SplitSet::Train),
            Some(SourceRole::Valid) => sets[i] = Some(SplitSet::Valid),
            Some(SourceRole::Test) => sets[i] = Some(SplitSet::Test),
            Some(SourceRole::Shared) => shared.push(i),
            Some(SourceRole::Excluded) | None => {}
        }
    }
    deal(&shared, [0.0, 0.5, 0.5], &mut pool_rng(spec.seed, SHARED_POOL), sets);
}

pub fn split_by_sources(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment> {
    spec.validate(corpus)?;
    let map = spec
        .source_assignments
        .as_ref()
        .ok_or_else(|| Error::Split("sources split needs a source map".into()))?;
    let missing: Vec<&str> = corpus
        .sources
        .iter()
        .map(|m| m.source.as_str())
        .filter(|s| !map.contains_key(*s))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Split(format!("no split assignment for sources: {}", missing.join(", "))));
    }
    let role_of: BTreeMap<&str, SourceRole> = map.iter().map(|(s, r)| (s.as_str(), *r)).collect();
    let mut sets = vec![None; corpus.articles.len()];
    apply_roles(corpus, spec, &role_of, &mut sets);
    finish(corpus, spec, sets, Vec::new())
}

/// Mainstream source roles from metadata, with explicit overrides from the spec taking precedence.
fn metadata_roles<'c>(
    corpus: &'c Corpus,
    spec: &SplitSpec,
    role_from_meta: &dyn Fn(Leaning, Credibility) -> SourceRole,
) -> BTreeMap<&'c str, SourceRole> {
    let overrides = spec.source_assignments.clone().unwrap_or_default();
    corpus
        .sources
        .iter()
        .filter(|m| m.corpus == CorpusKind::Mainstream)
        .map(|m| {
            let role = overrides
                .get(&m.source)
                .copied()
                .unwrap_or_else(|| role_from_meta(m.leaning, m.credibility));
            (m.source.as_str(), role)
        })
        .collect()
}

fn political_role(leaning: Leaning, _: Credibility) -> SourceRole {
    match leaning {
        Leaning::Left => SourceRole::Train,
        Leaning::Right => SourceRole::Shared,
        Leaning::Unrated => SourceRole::Excluded,
    }
}

fn credibility_role(_: Leaning, credibility: Credibility) -> SourceRole {
    match credibility {
        Credibility::High => SourceRole::Train,
        Credibility::Low => SourceRole::Shared,
    }
}

/// Role of every source the strategy maps explicitly (mainstream only for the metadata
/// strategies, whose PPN articles are dealt 80/10/10). `None` for `Random`.
pub fn resolved_roles<'c>(corpus: &'c Corpus, spec: &SplitSpec) -> Option<BTreeMap<&'c str, SourceRole>> {
    match spec.kind {
        SplitKind::Random => None,
        SplitKind::Sources => {
            let map = spec.source_assignments.as_ref()?;
            Some(
                corpus
                    .sources
                    .iter()
                    .filter_map(|m| map.get(&m.source).map(|r| (m.source.as_str(), *r)))
                    .collect(),
            )
        }
        SplitKind::Political => Some(metadata_roles(corpus, spec, &political_role)),
        SplitKind::Credibility => Some(metadata_roles(corpus, spec, &credibility_role)),
    }
}

/// Leaning and credibility strategies: mainstream roles from metadata (plus overrides), PPN 80/10/10.
fn split_by_metadata(
    corpus: &Corpus,
    spec: &SplitSpec,
    role_from_meta: fn(Leaning, Credibility) -> SourceRole,
) -> Result<SplitAssignment> {
    spec.validate(corpus)?;
    let mut warnings = Vec::new();
    let role_of = metadata_roles(corpus, spec, &role_from_meta);
    for (source, role) in &role_of {
        let unrated = corpus.source_meta(source).is_some_and(|m| m.leaning == Leaning::Unrated);
        if spec.kind == SplitKind::Political && unrated && *role == SourceRole::Excluded {
            warnings.push(format!("source {source:?} has no leaning rating and is excluded"));
        }
    }
    let has_shifted = corpus
        .articles
        .iter()
        .any(|a| matches!(role_of.get(a.source.as_str()), Some(SourceRole::Shared | SourceRole::Valid | SourceRole::Test)));
    if !has_shifted {
        return Err(Error::Split(match spec.kind {
            SplitKind::Political => "no right-leaning mainstream articles for valid/test".into(),
            _ => "no low-credibility mainstream articles for valid/test".into(),
        }));
    }
    let mut sets = vec![None; corpus.articles.len()];
    apply_roles(corpus, spec, &role_of, &mut sets);
    let ppn: Vec<usize> = corpus
        .articles
        .iter()
        .enumerate()
        .filter(|(_, a)| corpus.source_meta(&a.source).is_some_and(|m| m.corpus == CorpusKind::Ppn))
        .map(|(i, _)| i)
        .collect();
    deal(&ppn, spec.ratios, &mut pool_rng(spec.seed, PPN_POOL), &mut sets);
    finish(corpus, spec, sets, warnings)
}

pub fn split_political(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment> {
    split_by_metadata(corpus, spec, political_role)
}

pub fn split_credibility(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment> {
    split_by_metadata(corpus, spec, credibility_role)
}

/// Dispatches on `spec.kind`.
pub fn make_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment> {
    match spec.kind {
        SplitKind::Random => split_random(corpus, spec),
        SplitKind::Sources => split_by_sources(corpus, spec),
        SplitKind::Political => split_political(corpus, spec),
        SplitKind::Credibility => split_credibility(corpus, spec),
    }
}
