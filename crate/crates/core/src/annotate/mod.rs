//! Genre, topic and persuasion-technique annotation.

mod cache;
mod offline;
mod registry;
mod remote;
mod stats;
pub mod stub;

pub use cache::{AnnotationCache, CacheEntry};
pub use offline::{annotate_offline, LexiconSet, OfflineAnnotator};
pub use registry::{
    ConceptAnnotation, Genre, TechniqueRegistry, NUM_COARSE, NUM_FINE, NUM_GENRES, NUM_TOPICS,
};
pub use remote::{AnnotatorEndpoint, RemoteAnnotator, TOKEN_ENV};
pub use stats::{corpus_statistics, DistributionReport, SideDistribution};

use crate::corpus::{Article, Corpus};
use crate::error::{Error, Result};

/// Anything that turns article text into a [`ConceptAnnotation`].
pub trait Annotator: Sync {
    /// Cache key component; must change whenever the annotator's output could.
    fn annotator_id(&self) -> String;

    fn registry_version(&self) -> &str;

    fn annotate_text(&self, text: &str) -> Result<ConceptAnnotation>;

    /// `(id, text)` in, `(id, result)` out, same order.
    fn annotate_batch(&self, items: &[(String, String)]) -> Vec<(String, Result<ConceptAnnotation>)> {
        items
            .iter()
            .map(|(id, text)| (id.clone(), self.annotate_text(text)))
            .collect()
    }
}

impl Annotator for OfflineAnnotator {
    fn annotator_id(&self) -> String {
        self.id().to_string()
    }

    fn registry_version(&self) -> &str {
        &self.registry().version
    }

    fn annotate_text(&self, text: &str) -> Result<ConceptAnnotation> {
        Ok(self.annotate(text))
    }
}

impl Annotator for RemoteAnnotator {
    fn annotator_id(&self) -> String {
        self.id()
    }

    fn registry_version(&self) -> &str {
        &self.registry().version
    }

    fn annotate_text(&self, text: &str) -> Result<ConceptAnnotation> {
        self.annotate(text)
    }

    fn annotate_batch(&self, items: &[(String, String)]) -> Vec<(String, Result<ConceptAnnotation>)> {
        self.annotate_many(items)
    }
}

/// Annotates one article (ignores any annotation it already carries).
pub fn annotate_remote(article: &Article, annotator: &RemoteAnnotator) -> Result<ConceptAnnotation> {
    annotator.annotate(&article.text)
}

#[derive(Debug, Default)]
pub struct AnnotateSummary {
    /// Articles that already carried an annotation and were left alone.
    pub kept: usize,
    pub from_cache: usize,
    pub annotated: usize,
    pub failed: Vec<(String, Error)>,
}

impl AnnotateSummary {
    pub fn changed(&self) -> usize {
        self.from_cache + self.annotated
    }
}

/// Fills in missing annotations (all of them with `overwrite`), consulting and extending `cache`.
/// Failures are collected per article; successful results are kept even if some fail.
pub fn annotate_corpus(
    corpus: &mut Corpus,
    annotator: &dyn Annotator,
    cache: &mut AnnotationCache,
    overwrite: bool,
) -> Result<AnnotateSummary> {
    let annotator_id = annotator.annotator_id();
    let version = annotator.registry_version().to_string();
    let mut summary = AnnotateSummary::default();
    let mut pending = Vec::new();
    for (i, article) in corpus.articles.iter_mut().enumerate() {
        if article.annotation.is_some() && !overwrite {
            summary.kept += 1;
            continue;
        }
        if let Some(hit) = cache.get(&article.id, &annotator_id, &version) {
            article.annotation = Some(hit.clone());
            summary.from_cache += 1;
            continue;
        }
        pending.push((i, (article.id.clone(), article.text.clone())));
    }
    if pending.is_empty() {
        return Ok(summary);
    }
    let items: Vec<_> = pending.iter().map(|(_, item)| item.clone()).collect();
    let results = annotator.annotate_batch(&items);
    for ((idx, _), (id, result)) in pending.into_iter().zip(results) {
        match result {
            Ok(annotation) => {
                cache.insert(CacheEntry {
                    id,
                    annotator: annotator_id.clone(),
                    registry_version: version.clone(),
                    annotation: annotation.clone(),
                })?;
                corpus.articles[idx].annotation = Some(annotation);
                summary.annotated += 1;
            }
            Err(e) => {
                log::error!("annotation failed for {id}: {e}");
                summary.failed.push((id, e));
            }
        }
    }
    Ok(summary)
}
