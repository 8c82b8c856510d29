//! Per-class genre, topic and persuasion distributions over an annotated corpus.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TechniqueRegistry, NUM_FINE, NUM_GENRES, NUM_TOPICS};
use crate::corpus::{Corpus, CorpusKind, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideDistribution {
    pub corpus: CorpusKind,
    pub articles: usize,
    pub genre: Vec<f64>,
    pub topic: Vec<f64>,
    /// Mean span count per article for each fine technique.
    pub persuasion_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub registry_version: String,
    pub genre_names: Vec<String>,
    pub topic_names: Vec<String>,
    pub fine_names: Vec<String>,
    /// PPN first, then MAINSTREAM; sides without articles are omitted.
    pub sides: Vec<SideDistribution>,
}

impl DistributionReport {
    pub fn side(&self, corpus: CorpusKind) -> Option<&SideDistribution> {
        self.sides.iter().find(|s| s.corpus == corpus)
    }

    /// Long-format CSV: `corpus,kind,label,value`, one row per class/label pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("corpus,kind,label,value\n");
        for side in &self.sides {
            let groups = [
                ("genre", &self.genre_names, &side.genre),
                ("topic", &self.topic_names, &side.topic),
                ("persuasion_mean", &self.fine_names, &side.persuasion_mean),
            ];
            for (kind, names, values) in groups {
                for (name, v) in names.iter().zip(values.iter()) {
                    let _ = writeln!(out, "{},{kind},{name},{v}", side.corpus);
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn corpus_statistics(corpus: &Corpus, registry: &TechniqueRegistry) -> Result<DistributionReport> {
    let mut sides = Vec::new();
    for kind in [CorpusKind::Ppn, CorpusKind::Mainstream] {
        let label: Label = kind.label();
        let mut genre = [0usize; NUM_GENRES];
        let mut topic = [0usize; NUM_TOPICS];
        let mut spans = [0u64; NUM_FINE];
        let mut n = 0usize;
        for a in corpus.articles.iter().filter(|a| a.label == label) {
            let ann = a.annotation.as_ref().ok_or_else(|| Error::Unannotated(a.id.clone()))?;
            genre[ann.genre.index()] += 1;
            topic[ann.topic] += 1;
            for (acc, &c) in spans.iter_mut().zip(&ann.persuasion_fine) {
                *acc += u64::from(c);
            }
            n += 1;
        }
        if n == 0 {
            continue;
        }
        let frac = |c: usize| c as f64 / n as f64;
        sides.push(SideDistribution {
            corpus: kind,
            articles: n,
            genre: genre.iter().map(|&c| frac(c)).collect(),
            topic: topic.iter().map(|&c| frac(c)).collect(),
            persuasion_mean: spans.iter().map(|&c| c as f64 / n as f64).collect(),
        });
    }
    Ok(DistributionReport {
        registry_version: registry.version.clone(),
        genre_names: registry.genre_names.clone(),
        topic_names: registry.topic_names.clone(),
        fine_names: registry.fine_names.clone(),
        sides,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{ConceptAnnotation, Genre};
    use super::*;
    use crate::corpus::{Article, Credibility, Leaning, SourceMeta};

    fn corpus(anns: Vec<Option<ConceptAnnotation>>) -> Corpus {
        let articles = anns
            .into_iter()
            .enumerate()
            .map(|(i, annotation)| Article {
                id: format!("p{i}"),
                text: "text".into(),
                source: "RRN".into(),
                label: Label::Propaganda,
                language: "en".into(),
                annotation,
            })
            .collect();
        let meta = SourceMeta {
            source: "RRN".into(),
            corpus: CorpusKind::Ppn,
            leaning: Leaning::Unrated,
            credibility: Credibility::Low,
        };
        Corpus::new(articles, vec![meta]).unwrap()
    }

    fn ann(genre: Genre, loaded: u32) -> ConceptAnnotation {
        let r = TechniqueRegistry::default();
        let mut fine = vec![0; NUM_FINE];
        fine[r.fine_index("Loaded_Language").unwrap()] = loaded;
        ConceptAnnotation::from_fine(genre, 0, fine, &r).unwrap()
    }

    #[test]
    fn all_opinion() {
        let c = corpus((0..4).map(|_| Some(ann(Genre::Opinion, 0))).collect());
        let rep = corpus_statistics(&c, &TechniqueRegistry::default()).unwrap();
        let side = rep.side(CorpusKind::Ppn).unwrap();
        assert_eq!(side.genre, vec![0.0, 1.0, 0.0]);
        assert!(rep.side(CorpusKind::Mainstream).is_none());
    }

    #[test]
    fn persuasion_mean() {
        let r = TechniqueRegistry::default();
        let c = corpus(vec![Some(ann(Genre::Reporting, 0)), Some(ann(Genre::Satire, 4))]);
        let rep = corpus_statistics(&c, &r).unwrap();
        let side = rep.side(CorpusKind::Ppn).unwrap();
        assert_eq!(side.persuasion_mean[r.fine_index("Loaded_Language").unwrap()], 2.0);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + NUM_GENRES + NUM_TOPICS + NUM_FINE);
        assert!(csv.contains("PPN,persuasion_mean,Loaded_Language,2\n"));
    }

    #[test]
    fn unannotated_rejected() {
        let c = corpus(vec![Some(ann(Genre::Reporting, 0)), None]);
        assert!(matches!(
            corpus_statistics(&c, &TechniqueRegistry::default()),
            Err(Error::Unannotated(id)) if id == "p1"
        ));
    }
}
