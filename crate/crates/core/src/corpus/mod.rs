//! Article data model and JSONL corpus ingestion.
//!
//! Two line-delimited JSON files describe a corpus:
//!
//! * articles: `{"id", "text", "source", "label": 0|1, "language", "annotation"?}`
//! * sources: `{"source", "corpus": "PPN"|"MAINSTREAM", "leaning": "left"|"right"|"unrated",
//!   "credibility": "high"|"low"}`

pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotate::{ConceptAnnotation, TechniqueRegistry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Mainstream = 0,
    Propaganda = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_positive(self) -> bool {
        self == Label::Propaganda
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Mainstream),
            1 => Ok(Label::Propaganda),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub text: String,
    pub source: String,
    pub label: Label,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<ConceptAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CorpusKind {
    #[serde(rename = "PPN")]
    Ppn,
    #[serde(rename = "MAINSTREAM")]
    Mainstream,
}

impl CorpusKind {
    pub fn label(self) -> Label {
        match self {
            CorpusKind::Ppn => Label::Propaganda,
            CorpusKind::Mainstream => Label::Mainstream,
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusKind::Ppn => "PPN",
            CorpusKind::Mainstream => "MAINSTREAM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leaning {
    Left,
    Right,
    Unrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Credibility {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub source: String,
    pub corpus: CorpusKind,
    pub leaning: Leaning,
    pub credibility: Credibility,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub articles: Vec<Article>,
    pub sources: Vec<SourceMeta>,
}

impl Corpus {
    /// Builds and validates a corpus against the bundled technique registry.
    pub fn new(articles: Vec<Article>, sources: Vec<SourceMeta>) -> Result<Self> {
        Self::with_registry(articles, sources, &TechniqueRegistry::default())
    }

    pub fn with_registry(
        articles: Vec<Article>,
        sources: Vec<SourceMeta>,
        registry: &TechniqueRegistry,
    ) -> Result<Self> {
        let corpus = Corpus { articles, sources };
        corpus.validate(registry)?;
        Ok(corpus)
    }

    pub fn validate(&self, registry: &TechniqueRegistry) -> Result<()> {
        if self.articles.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut meta = BTreeMap::new();
        for m in &self.sources {
            if m.corpus == CorpusKind::Ppn && m.credibility != Credibility::Low {
                return Err(Error::InvalidArticle {
                    id: m.source.clone(),
                    reason: "PPN sources must have low credibility".into(),
                });
            }
            if meta.insert(m.source.as_str(), m).is_some() {
                return Err(Error::DuplicateSource(m.source.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(self.articles.len());
        for a in &self.articles {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
            if a.text.trim().is_empty() {
                return Err(Error::InvalidArticle {
                    id: a.id.clone(),
                    reason: "text is empty".into(),
                });
            }
            let m = meta.get(a.source.as_str()).ok_or_else(|| Error::UnknownSource {
                article: a.id.clone(),
                source_name: a.source.clone(),
            })?;
            if m.corpus.label() != a.label {
                return Err(Error::InvalidArticle {
                    id: a.id.clone(),
                    reason: format!("label {} disagrees with {} source {:?}", a.label.as_u8(), m.corpus, m.source),
                });
            }
            if let Some(ann) = &a.annotation {
                ann.validate(registry).map_err(|reason| Error::InvalidArticle {
                    id: a.id.clone(),
                    reason,
                })?;
            }
        }
        Ok(())
    }

    /// `(propaganda, mainstream)` article counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.articles.iter().filter(|a| a.label.is_positive()).count();
        (pos, self.articles.len() - pos)
    }

    pub fn source_meta(&self, source: &str) -> Option<&SourceMeta> {
        self.sources.iter().find(|m| m.source == source)
    }

    pub fn meta_index(&self) -> BTreeMap<&str, &SourceMeta> {
        self.sources.iter().map(|m| (m.source.as_str(), m)).collect()
    }

    pub fn source_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = self.sources.iter().map(|m| (m.source.as_str(), 0)).collect();
        for a in &self.articles {
            *counts.entry(a.source.as_str()).or_default() += 1;
        }
        counts
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.articles.iter().find(|a| a.id == id)
    }

    pub fn is_fully_annotated(&self) -> bool {
        self.articles.iter().all(|a| a.annotation.is_some())
    }
}

pub fn load_corpus(path: &Path, meta_path: &Path) -> Result<Corpus> {
    load_corpus_with(path, meta_path, &TechniqueRegistry::default())
}

pub fn load_corpus_with(path: &Path, meta_path: &Path, registry: &TechniqueRegistry) -> Result<Corpus> {
    let sources = read_jsonl(meta_path)?;
    let articles = read_jsonl(path)?;
    Corpus::with_registry(articles, sources, registry)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, meta_path: &Path) -> Result<()> {
    write_jsonl(path, &corpus.articles)?;
    write_jsonl(meta_path, &corpus.sources)
}

/// One JSON value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
