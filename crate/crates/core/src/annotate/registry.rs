use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_GENRES: usize = 3;
pub const NUM_TOPICS: usize = 9;
pub const NUM_FINE: usize = 23;
pub const NUM_COARSE: usize = 6;

const DEFAULT_REGISTRY: &str = include_str!("../../data/registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Genre {
    Reporting,
    Opinion,
    Satire,
}

impl Genre {
    pub const ALL: [Genre; NUM_GENRES] = [Genre::Reporting, Genre::Opinion, Genre::Satire];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Genre> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Genre, topic and persuasion-technique taxonomy.
///
/// The fine-grained techniques and their six coarse groups follow the SemEval-2023 Task 3
/// persuasion taxonomy. Topic names are data, not code: swap the file to relabel them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechniqueRegistry {
    pub version: String,
    pub genre_names: Vec<String>,
    pub topic_names: Vec<String>,
    pub coarse_names: Vec<String>,
    pub fine_names: Vec<String>,
    pub fine_to_coarse: Vec<usize>,
}

impl Default for TechniqueRegistry {
    fn default() -> Self {
        Self::from_json(DEFAULT_REGISTRY).expect("bundled registry is valid")
    }
}

impl TechniqueRegistry {
    pub fn from_json(s: &str) -> Result<Self> {
        let reg: TechniqueRegistry = serde_json::from_str(s)?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::InvalidRegistry(format!("{what}: expected {want} entries, found {got}")))
            }
        };
        check("genre_names", self.genre_names.len(), NUM_GENRES)?;
        check("topic_names", self.topic_names.len(), NUM_TOPICS)?;
        check("coarse_names", self.coarse_names.len(), NUM_COARSE)?;
        check("fine_names", self.fine_names.len(), NUM_FINE)?;
        check("fine_to_coarse", self.fine_to_coarse.len(), NUM_FINE)?;
        for (g, name) in Genre::ALL.iter().zip(&self.genre_names) {
            if !name.eq_ignore_ascii_case(&g.to_string()) {
                return Err(Error::InvalidRegistry(format!(
                    "genre order must be Reporting, Opinion, Satire; found {name:?} at {}",
                    g.index()
                )));
            }
        }
        let mut hit = [false; NUM_COARSE];
        for &c in &self.fine_to_coarse {
            if c >= NUM_COARSE {
                return Err(Error::InvalidRegistry(format!("coarse id {c} out of range")));
            }
            hit[c] = true;
        }
        if let Some(missing) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidRegistry(format!(
                "coarse group {:?} has no fine technique",
                self.coarse_names[missing]
            )));
        }
        Ok(())
    }

    /// Case-insensitive lookup; `-`, `_` and spaces are interchangeable.
    pub fn fine_index(&self, name: &str) -> Option<usize> {
        let key = normalize_label(name);
        self.fine_names.iter().position(|n| normalize_label(n) == key)
    }

    pub fn genre(&self, name: &str) -> Option<Genre> {
        let key = normalize_label(name);
        self.genre_names
            .iter()
            .position(|n| normalize_label(n) == key)
            .and_then(Genre::from_index)
    }

    /// Accepts a topic name or its numeric id.
    pub fn topic_index(&self, name: &str) -> Option<usize> {
        if let Ok(id) = name.trim().parse::<usize>() {
            return (id < NUM_TOPICS).then_some(id);
        }
        let key = normalize_label(name);
        self.topic_names.iter().position(|n| normalize_label(n) == key)
    }

    pub fn coarse_counts(&self, fine: &[u32]) -> Vec<u32> {
        let mut coarse = vec![0; NUM_COARSE];
        for (i, &n) in fine.iter().enumerate() {
            coarse[self.fine_to_coarse[i]] += n;
        }
        coarse
    }
}

fn normalize_label(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// Article-level concept features: one genre, one topic, persuasion-technique span counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAnnotation {
    pub genre: Genre,
    pub topic: usize,
    pub persuasion_fine: Vec<u32>,
    pub persuasion_coarse: Vec<u32>,
}

impl ConceptAnnotation {
    pub fn from_fine(genre: Genre, topic: usize, fine: Vec<u32>, registry: &TechniqueRegistry) -> Result<Self> {
        if fine.len() != NUM_FINE {
            return Err(Error::InvalidRegistry(format!(
                "expected {NUM_FINE} fine counts, found {}",
                fine.len()
            )));
        }
        if topic >= NUM_TOPICS {
            return Err(Error::InvalidRegistry(format!("topic id {topic} out of range")));
        }
        let persuasion_coarse = registry.coarse_counts(&fine);
        Ok(Self {
            genre,
            topic,
            persuasion_fine: fine,
            persuasion_coarse,
        })
    }

    pub fn validate(&self, registry: &TechniqueRegistry) -> std::result::Result<(), String> {
        if self.topic >= NUM_TOPICS {
            return Err(format!("topic id {} out of range", self.topic));
        }
        if self.persuasion_fine.len() != NUM_FINE {
            return Err(format!("persuasion_fine has {} entries", self.persuasion_fine.len()));
        }
        if self.persuasion_coarse != registry.coarse_counts(&self.persuasion_fine) {
            return Err("persuasion_coarse disagrees with fine counts".into());
        }
        Ok(())
    }
}
