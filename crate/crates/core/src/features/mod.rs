//! Fused feature vectors: averaged word embedding, one-hot genre, one-hot topic and
//! persuasion-technique counts, laid out as `text | genre | topic | persuasion`.

mod embedding;
mod matrix;

pub use embedding::{load_embeddings, tokenize, EmbeddingTable, OovPolicy, DEFAULT_BUCKETS, DEFAULT_DIMENSION};
pub use matrix::{featurize_corpus, FeatureMatrix, FuseOptions};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{ConceptAnnotation, NUM_COARSE, NUM_FINE, NUM_GENRES, NUM_TOPICS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Text + genre + topic + 23 fine technique counts.
    Hybrid,
    /// Text + genre + topic + 6 coarse technique counts.
    HybridLite,
    TextOnly,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Hybrid, FeatureMode::HybridLite, FeatureMode::TextOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Hybrid => "hybrid",
            FeatureMode::HybridLite => "hybrid-lite",
            FeatureMode::TextOnly => "text-only",
        }
    }

    /// Row label used in rendered result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureMode::Hybrid => "Hybrid",
            FeatureMode::HybridLite => "Hybrid Lite",
            FeatureMode::TextOnly => "Text Only",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            FeatureMode::Hybrid => 1,
            FeatureMode::HybridLite => 2,
            FeatureMode::TextOnly => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn persuasion_dim(self) -> usize {
        match self {
            FeatureMode::Hybrid => NUM_FINE,
            FeatureMode::HybridLite => NUM_COARSE,
            FeatureMode::TextOnly => 0,
        }
    }

    pub fn is_hybrid(self) -> bool {
        self != FeatureMode::TextOnly
    }

    /// Total width for a given text embedding width.
    pub fn input_dim(self, text_dim: usize) -> usize {
        FeatureLayout::new(self, text_dim).len()
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown feature mode {s:?} (hybrid, hybrid-lite, text-only)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Text,
    Genre,
    Topic,
    Persuasion,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Text,
        FeatureGroup::Genre,
        FeatureGroup::Topic,
        FeatureGroup::Persuasion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Text => "text",
            FeatureGroup::Genre => "genre",
            FeatureGroup::Topic => "topic",
            FeatureGroup::Persuasion => "persuasion",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub mode: FeatureMode,
    pub text_dim: usize,
}

impl FeatureLayout {
    pub fn new(mode: FeatureMode, text_dim: usize) -> Self {
        FeatureLayout { mode, text_dim }
    }

    pub fn text(&self) -> Range<usize> {
        0..self.text_dim
    }

    pub fn genre(&self) -> Option<Range<usize>> {
        self.mode.is_hybrid().then(|| self.text_dim..self.text_dim + NUM_GENRES)
    }

    pub fn topic(&self) -> Option<Range<usize>> {
        let start = self.text_dim + NUM_GENRES;
        self.mode.is_hybrid().then(|| start..start + NUM_TOPICS)
    }

    pub fn persuasion(&self) -> Option<Range<usize>> {
        let start = self.text_dim + NUM_GENRES + NUM_TOPICS;
        self.mode
            .is_hybrid()
            .then(|| start..start + self.mode.persuasion_dim())
    }

    pub fn len(&self) -> usize {
        if self.mode.is_hybrid() {
            self.text_dim + NUM_GENRES + NUM_TOPICS + self.mode.persuasion_dim()
        } else {
            self.text_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named slices present in this layout, in layout order.
    pub fn groups(&self) -> Vec<(FeatureGroup, Range<usize>)> {
        let mut out = vec![(FeatureGroup::Text, self.text())];
        if let (Some(g), Some(t), Some(p)) = (self.genre(), self.topic(), self.persuasion()) {
            out.push((FeatureGroup::Genre, g));
            out.push((FeatureGroup::Topic, t));
            out.push((FeatureGroup::Persuasion, p));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub layout: FeatureLayout,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>, layout: FeatureLayout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::InputDimension {
                expected: layout.len(),
                found: values.len(),
            });
        }
        Ok(FeatureVector { values, layout })
    }

    pub fn mode(&self) -> FeatureMode {
        self.layout.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, group: FeatureGroup) -> Option<&[T]> {
        let range = match group {
            FeatureGroup::Text => Some(self.layout.text()),
            FeatureGroup::Genre => self.layout.genre(),
            FeatureGroup::Topic => self.layout.topic(),
            FeatureGroup::Persuasion => self.layout.persuasion(),
        }?;
        Some(&self.values[range])
    }
}

impl<T> AsRef<[T]> for FeatureVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

/// Concatenates `text | genre one-hot | topic one-hot | persuasion counts`.
/// Counts are fine-grained for [`FeatureMode::Hybrid`] and coarse for
/// [`FeatureMode::HybridLite`]; [`FeatureMode::TextOnly`] ignores the annotation.
pub fn fuse<T: Scalar>(text_vec: &[T], annotation: Option<&ConceptAnnotation>, mode: FeatureMode) -> Result<FeatureVector<T>> {
    fuse_scaled(text_vec, annotation, mode, T::one())
}

/// [`fuse`] with persuasion counts multiplied by `persuasion_scale`.
pub fn fuse_scaled<T: Scalar>(
    text_vec: &[T],
    annotation: Option<&ConceptAnnotation>,
    mode: FeatureMode,
    persuasion_scale: T,
) -> Result<FeatureVector<T>> {
    let layout = FeatureLayout::new(mode, text_vec.len());
    let mut values = Vec::with_capacity(layout.len());
    values.extend_from_slice(text_vec);
    if mode.is_hybrid() {
        let ann = annotation.ok_or(Error::MissingAnnotation)?;
        let mut genre = [T::zero(); NUM_GENRES];
        genre[ann.genre.index()] = T::one();
        values.extend_from_slice(&genre);
        let mut topic = [T::zero(); NUM_TOPICS];
        *topic
            .get_mut(ann.topic)
            .ok_or_else(|| Error::ModeMismatch(format!("topic id {} out of range", ann.topic)))? = T::one();
        values.extend_from_slice(&topic);
        let counts = match mode {
            FeatureMode::Hybrid => &ann.persuasion_fine,
            _ => &ann.persuasion_coarse,
        };
        if counts.len() != mode.persuasion_dim() {
            return Err(Error::ModeMismatch(format!(
                "{} persuasion counts for mode {mode}",
                counts.len()
            )));
        }
        values.extend(counts.iter().map(|&c| T::of(c as f64) * persuasion_scale));
    }
    FeatureVector::new(values, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{Genre, TechniqueRegistry};

    fn ann(genre: Genre, topic: usize, fine: Vec<u32>) -> ConceptAnnotation {
        ConceptAnnotation::from_fine(genre, topic, fine, &TechniqueRegistry::default()).unwrap()
    }

    #[test]
    fn widths_match_modes() {
        assert_eq!(FeatureMode::Hybrid.input_dim(300), 335);
        assert_eq!(FeatureMode::HybridLite.input_dim(300), 318);
        assert_eq!(FeatureMode::TextOnly.input_dim(300), 300);
        let l = FeatureLayout::new(FeatureMode::Hybrid, 300);
        assert_eq!(l.genre(), Some(300..303));
        assert_eq!(l.topic(), Some(303..312));
        assert_eq!(l.persuasion(), Some(312..335));
    }

    #[test]
    fn opinion_one_hot() {
        let text = vec![0.0f64; 300];
        let a = ann(Genre::Opinion, 4, vec![0; 23]);
        let v = fuse(&text, Some(&a), FeatureMode::Hybrid).unwrap();
        assert_eq!(v.len(), 335);
        assert_eq!(v.slice(FeatureGroup::Genre).unwrap(), &[0.0, 1.0, 0.0]);
        let topic = v.slice(FeatureGroup::Topic).unwrap();
        assert_eq!(topic.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(topic[4], 1.0);
        assert!(v.slice(FeatureGroup::Persuasion).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn text_only_ignores_annotation() {
        let text = vec![0.5f64; 300];
        let a = ann(Genre::Satire, 0, vec![2; 23]);
        assert_eq!(fuse(&text, Some(&a), FeatureMode::TextOnly).unwrap().len(), 300);
        assert_eq!(fuse(&text, None, FeatureMode::TextOnly).unwrap().len(), 300);
    }

    #[test]
    fn hybrid_lite_uses_coarse_counts() {
        let mut fine = vec![0; 23];
        fine[19] = 3; // loaded language
        fine[22] = 1; // repetition
        let a = ann(Genre::Reporting, 0, fine);
        let v = fuse(&[0.0f64; 300], Some(&a), FeatureMode::HybridLite).unwrap();
        assert_eq!(v.len(), 318);
        assert_eq!(v.slice(FeatureGroup::Persuasion).unwrap(), &[0.0, 0.0, 0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn hybrid_without_annotation_errors() {
        assert!(matches!(
            fuse(&[0.0f64; 300], None, FeatureMode::Hybrid),
            Err(Error::MissingAnnotation)
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("hybrid-lite".parse::<FeatureMode>().unwrap(), FeatureMode::HybridLite);
        assert!("lite".parse::<FeatureMode>().is_err());
    }
}
