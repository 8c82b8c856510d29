//! Append-only JSONL store of annotations keyed by (article id, annotator id, registry version).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ConceptAnnotation;
use crate::corpus::read_jsonl;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub annotator: String,
    pub registry_version: String,
    pub annotation: ConceptAnnotation,
}

type Key = (String, String, String);

#[derive(Debug)]
pub struct AnnotationCache {
    path: PathBuf,
    entries: HashMap<Key, ConceptAnnotation>,
    writer: Option<BufWriter<File>>,
}

impl AnnotationCache {
    /// Opens (or lazily creates) the cache file. Later lines win over earlier ones.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in read_jsonl::<CacheEntry>(path)? {
                entries.insert((e.id, e.annotator, e.registry_version), e.annotation);
            }
        }
        Ok(AnnotationCache {
            path: path.to_path_buf(),
            entries,
            writer: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str, annotator: &str, registry_version: &str) -> Option<&ConceptAnnotation> {
        self.entries
            .get(&(id.to_string(), annotator.to_string(), registry_version.to_string()))
    }

    /// Records an entry and appends it to disk immediately so an interrupted run can resume.
    pub fn insert(&mut self, entry: CacheEntry) -> Result<()> {
        if self.writer.is_none() {
            if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| Error::io(&self.path, e))?;
            self.writer = Some(BufWriter::new(f));
        }
        let w = self.writer.as_mut().expect("writer opened above");
        serde_json::to_writer(&mut *w, &entry)?;
        w.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        w.flush().map_err(|e| Error::io(&self.path, e))?;
        self.entries
            .insert((entry.id, entry.annotator, entry.registry_version), entry.annotation);
        Ok(())
    }
}
