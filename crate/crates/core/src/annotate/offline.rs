use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConceptAnnotation, Genre, TechniqueRegistry, NUM_FINE, NUM_GENRES, NUM_TOPICS};
use crate::error::{Error, Result};
use crate::features::tokenize;

const DEFAULT_LEXICONS: &str = include_str!("../../data/lexicons.json");

/// Cue phrases per genre, topic and fine technique, keyed by registry label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSet {
    #[serde(default)]
    pub genre: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub topic: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub persuasion: BTreeMap<String, Vec<String>>,
}

impl LexiconSet {
    pub fn bundled() -> Self {
        serde_json::from_str(DEFAULT_LEXICONS).expect("bundled lexicons parse")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn is_empty(&self) -> bool {
        [&self.genre, &self.topic, &self.persuasion]
            .iter()
            .all(|m| m.values().all(|cues| cues.iter().all(|c| tokenize(c).is_empty())))
    }
}

/// Token-level phrase matcher: case-insensitive, longest match first, non-overlapping.
/// Equal-length matches go to the lowest label id.
#[derive(Debug, Clone)]
struct CueMatcher {
    /// first token -> (cue tokens, label id), sorted by length desc then label asc
    by_first: HashMap<String, Vec<(Vec<String>, usize)>>,
    cue_counts: Vec<usize>,
}

impl CueMatcher {
    fn new(entries: impl IntoIterator<Item = (usize, Vec<String>)>, labels: usize) -> Self {
        let mut by_first: HashMap<String, Vec<(Vec<String>, usize)>> = HashMap::new();
        let mut cue_counts = vec![0; labels];
        for (label, cues) in entries {
            for cue in cues {
                let toks = tokenize(&cue);
                if let Some(first) = toks.first().cloned() {
                    cue_counts[label] += 1;
                    by_first.entry(first).or_default().push((toks, label));
                }
            }
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
            list.dedup();
        }
        CueMatcher { by_first, cue_counts }
    }

    fn count(&self, tokens: &[String]) -> Vec<u32> {
        let mut hits = vec![0u32; self.cue_counts.len()];
        let mut i = 0;
        while i < tokens.len() {
            let matched = self.by_first.get(&tokens[i]).and_then(|cands| {
                cands
                    .iter()
                    .find(|(cue, _)| tokens[i..].starts_with(cue))
                    .map(|(cue, label)| (cue.len(), *label))
            });
            match matched {
                Some((len, label)) => {
                    hits[label] += 1;
                    i += len;
                }
                None => i += 1,
            }
        }
        hits
    }

    /// Label with the highest hit rate (hits / number of cues); `None` if nothing matched.
    fn argmax(&self, hits: &[u32]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (label, (&h, &n)) in hits.iter().zip(&self.cue_counts).enumerate() {
            if h == 0 || n == 0 {
                continue;
            }
            let score = h as f64 / n as f64;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((label, score));
            }
        }
        best.map(|(l, _)| l)
    }
}

/// Deterministic keyword annotator. Falls back to `Reporting` and topic 0 when no cue hits.
#[derive(Debug, Clone)]
pub struct OfflineAnnotator {
    registry: TechniqueRegistry,
    genre: CueMatcher,
    topic: CueMatcher,
    persuasion: CueMatcher,
}

impl OfflineAnnotator {
    pub fn new(lexicons: &LexiconSet, registry: &TechniqueRegistry) -> Result<Self> {
        if lexicons.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        let resolve = |kind: &'static str, map: &BTreeMap<String, Vec<String>>, find: &dyn Fn(&str) -> Option<usize>| {
            map.iter()
                .map(|(label, cues)| {
                    find(label)
                        .map(|id| (id, cues.clone()))
                        .ok_or_else(|| Error::TaxonomyMismatch {
                            kind,
                            label: label.clone(),
                        })
                })
                .collect::<Result<Vec<_>>>()
        };
        let genre = resolve("genre", &lexicons.genre, &|l| registry.genre(l).map(Genre::index))?;
        let topic = resolve("topic", &lexicons.topic, &|l| registry.topic_index(l))?;
        let persuasion = resolve("technique", &lexicons.persuasion, &|l| registry.fine_index(l))?;
        Ok(OfflineAnnotator {
            registry: registry.clone(),
            genre: CueMatcher::new(genre, NUM_GENRES),
            topic: CueMatcher::new(topic, NUM_TOPICS),
            persuasion: CueMatcher::new(persuasion, NUM_FINE),
        })
    }

    /// Stable identifier used as the annotation-cache key.
    pub fn id(&self) -> &'static str {
        "offline-lexicon"
    }

    pub fn registry(&self) -> &TechniqueRegistry {
        &self.registry
    }

    pub fn annotate(&self, text: &str) -> ConceptAnnotation {
        let tokens = tokenize(text);
        let genre = self
            .genre
            .argmax(&self.genre.count(&tokens))
            .and_then(Genre::from_index)
            .unwrap_or(Genre::Reporting);
        let topic = self.topic.argmax(&self.topic.count(&tokens)).unwrap_or(0);
        let fine = self.persuasion.count(&tokens);
        ConceptAnnotation::from_fine(genre, topic, fine, &self.registry).expect("matcher emits registry-shaped counts")
    }
}

pub fn annotate_offline(text: &str, lexicons: &LexiconSet, registry: &TechniqueRegistry) -> Result<ConceptAnnotation> {
    Ok(OfflineAnnotator::new(lexicons, registry)?.annotate(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(json: &str) -> LexiconSet {
        LexiconSet::from_json(json).unwrap()
    }

    #[test]
    fn no_hits_falls_back_to_defaults() {
        let r = TechniqueRegistry::default();
        let a = annotate_offline("nothing to see here", &LexiconSet::bundled(), &r).unwrap();
        assert_eq!(a.genre, Genre::Reporting);
        assert_eq!(a.topic, 0);
        assert!(a.persuasion_fine.iter().all(|&c| c == 0));
    }

    #[test]
    fn counts_repeated_cue() {
        let r = TechniqueRegistry::default();
        let a = annotate_offline("Evil plans. EVIL people, evil! so evil", &LexiconSet::bundled(), &r).unwrap();
        assert_eq!(a.persuasion_fine[r.fine_index("Loaded_Language").unwrap()], 4);
        assert_eq!(a.persuasion_fine.iter().sum::<u32>(), 4);
    }

    #[test]
    fn longest_match_wins_and_does_not_overlap() {
        let r = TechniqueRegistry::default();
        let l = lex(r#"{"persuasion": {"Whataboutism": ["what about"], "Red_Herring": ["what about the weather"]}}"#);
        let a = annotate_offline("What about the weather? what about it", &l, &r).unwrap();
        assert_eq!(a.persuasion_fine[r.fine_index("Red_Herring").unwrap()], 1);
        assert_eq!(a.persuasion_fine[r.fine_index("Whataboutism").unwrap()], 1);
    }

    #[test]
    fn genre_tie_goes_to_lowest_id() {
        let r = TechniqueRegistry::default();
        let l = lex(r#"{"genre": {"Satire": ["genius"], "Opinion": ["clearly"]}}"#);
        let a = annotate_offline("clearly a genius", &l, &r).unwrap();
        assert_eq!(a.genre, Genre::Opinion);
        let a = annotate_offline("genius genius clearly", &l, &r).unwrap();
        assert_eq!(a.genre, Genre::Satire);
    }

    #[test]
    fn topic_scores_are_normalized_by_cue_count() {
        let r = TechniqueRegistry::default();
        let l = lex(r#"{"topic": {"topic_1": ["army", "tank", "war", "front"], "topic_2": ["gas"]}}"#);
        // topic_1: 2 hits / 4 cues = 0.5 ; topic_2: 1 hit / 1 cue = 1.0
        let a = annotate_offline("army tank gas", &l, &r).unwrap();
        assert_eq!(a.topic, 2);
    }

    #[test]
    fn empty_and_unknown_lexicons_rejected() {
        let r = TechniqueRegistry::default();
        assert!(matches!(annotate_offline("x", &LexiconSet::default(), &r), Err(Error::EmptyLexicon)));
        let l = lex(r#"{"persuasion": {"Foo": ["bar"]}}"#);
        assert!(matches!(
            annotate_offline("x", &l, &r),
            Err(Error::TaxonomyMismatch { label, .. }) if label == "Foo"
        ));
    }

    #[test]
    fn deterministic() {
        let r = TechniqueRegistry::default();
        let ann = OfflineAnnotator::new(&LexiconSet::bundled(), &r).unwrap();
        let text = "We must act now, before it is too late: the evil regime is a threat to our nation.";
        assert_eq!(ann.annotate(text), ann.annotate(text));
    }
}
