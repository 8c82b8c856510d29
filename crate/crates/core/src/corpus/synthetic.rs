//! Deterministic synthetic corpora with planted class signal.
//!
//! Each feature family (lexical, genre, topic, persuasion) has a signal strength `s` in
//! `[0, 1]`. The class-conditional distribution actually sampled is
//! `s * class_distribution + (1 - s) * shared_distribution`, where the shared distribution
//! is the average of the two classes, so `s = 0` makes both classes identical.
//!
//! Texts are unigram draws from a vocabulary split into blocks: a background block, one
//! block per class, a register block shared by low-credibility outlets and one block per
//! source. A token comes from the article's class block with probability
//! `lexical * max_token_share` (only for sources listed in `lexical_sources`, when given),
//! from the register block with probability `credibility_register * max_token_share`
//! (low-credibility sources only), from its source block with probability
//! `source_style * max_token_share`, and from the background otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Article, Corpus, CorpusKind, Credibility, Label, Leaning, SourceMeta};
use crate::annotate::{ConceptAnnotation, Genre, TechniqueRegistry, NUM_FINE, NUM_GENRES, NUM_TOPICS};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, OovPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub source: String,
    pub corpus: CorpusKind,
    pub leaning: Leaning,
    pub credibility: Credibility,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub lexical: f64,
    pub genre: f64,
    pub topic: f64,
    pub persuasion: f64,
    /// Per-source vocabulary signature; leaks class through source identity.
    #[serde(default)]
    pub source_style: f64,
    /// Vocabulary shared by every low-credibility source whatever its label; correlates with
    /// class only when the training data lacks low-credibility mainstream outlets.
    #[serde(default)]
    pub credibility_register: f64,
    /// Restricts the lexical class signal to these sources; `None` means every source.
    #[serde(default)]
    pub lexical_sources: Option<Vec<String>>,
}

impl SignalPlan {
    pub fn null() -> Self {
        SignalPlan {
            lexical: 0.0,
            genre: 0.0,
            topic: 0.0,
            persuasion: 0.0,
            source_style: 0.0,
            credibility_register: 0.0,
            lexical_sources: None,
        }
    }
}

/// Probabilities that a token of a given source comes from each non-background block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenShares {
    pub class: f64,
    pub register: f64,
    pub source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub sources: Vec<SyntheticSource>,
    pub vocabulary_size: usize,
    pub text_length: usize,
    pub class_block_size: usize,
    pub source_block_size: usize,
    pub max_token_share: f64,
    pub signal: SignalPlan,
    /// Indexed by label (0 = mainstream, 1 = propaganda).
    pub genre_probs: [[f64; NUM_GENRES]; 2],
    pub topic_probs: [[f64; NUM_TOPICS]; 2],
    pub persuasion_rates: [[f64; NUM_FINE]; 2],
    pub language: String,
}

/// Mainstream and PPN sources with the leaning/credibility ratings behind the default
/// robustness splits.
pub const SOURCE_ROSTER: [(&str, CorpusKind, Leaning, Credibility); 14] = [
    ("RRN", CorpusKind::Ppn, Leaning::Unrated, Credibility::Low),
    ("TribunalUkraine", CorpusKind::Ppn, Leaning::Unrated, Credibility::Low),
    ("War on Fakes", CorpusKind::Ppn, Leaning::Unrated, Credibility::Low),
    ("APNews", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("The Guardian", CorpusKind::Mainstream, Leaning::Unrated, Credibility::High),
    ("CNN", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("USA Today", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("Forbes", CorpusKind::Mainstream, Leaning::Right, Credibility::High),
    ("Fox News", CorpusKind::Mainstream, Leaning::Right, Credibility::Low),
    ("NBC News", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("NYTimes", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("Washington Post", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("CBSNews", CorpusKind::Mainstream, Leaning::Left, Credibility::High),
    ("Daily Mail", CorpusKind::Mainstream, Leaning::Right, Credibility::Low),
];

fn roster_with_counts(counts: [usize; 14]) -> Vec<SyntheticSource> {
    SOURCE_ROSTER
        .iter()
        .zip(counts)
        .map(|(&(name, corpus, leaning, credibility), count)| SyntheticSource {
            source: name.to_string(),
            corpus,
            leaning,
            credibility,
            count,
        })
        .collect()
}

const MAINSTREAM_GENRE: [f64; 3] = [0.50, 0.45, 0.05];
const PROPAGANDA_GENRE: [f64; 3] = [0.08, 0.77, 0.15];
const MAINSTREAM_TOPIC: [f64; 9] = [0.30, 0.15, 0.12, 0.10, 0.09, 0.08, 0.07, 0.05, 0.04];
const PROPAGANDA_TOPIC: [f64; 9] = [0.34, 0.13, 0.10, 0.11, 0.08, 0.09, 0.06, 0.05, 0.04];

/// Name calling, doubt, fear/prejudice, loaded language, exaggeration, repetition.
const COMMON_TECHNIQUES: [usize; 6] = [0, 2, 9, 19, 21, 22];

fn persuasion_rates() -> [[f64; NUM_FINE]; 2] {
    let mut main = [0.3; NUM_FINE];
    let mut prop = [0.6; NUM_FINE];
    let common = [(0.4, 1.2), (0.3, 1.0), (0.3, 1.5), (1.0, 3.0), (0.4, 1.5), (0.3, 1.5)];
    for (i, (m, p)) in COMMON_TECHNIQUES.into_iter().zip(common) {
        main[i] = m;
        prop[i] = p;
    }
    [main, prop]
}

/// Most techniques rare in both classes; the six common devices carry the contrast.
fn sparse_persuasion_rates() -> [[f64; NUM_FINE]; 2] {
    let mut rates = [[0.05; NUM_FINE]; 2];
    for i in COMMON_TECHNIQUES {
        rates[0][i] = 0.1;
        rates[1][i] = 2.75;
    }
    rates
}

impl SyntheticSpec {
    fn base(sources: Vec<SyntheticSource>, signal: SignalPlan) -> Self {
        SyntheticSpec {
            sources,
            vocabulary_size: 2000,
            text_length: 200,
            class_block_size: 100,
            source_block_size: 30,
            max_token_share: 0.5,
            signal,
            genre_probs: [MAINSTREAM_GENRE, PROPAGANDA_GENRE],
            topic_probs: [MAINSTREAM_TOPIC, PROPAGANDA_TOPIC],
            persuasion_rates: persuasion_rates(),
            language: "en".into(),
        }
    }

    /// English-subset scale: 3219 propaganda and 1004 mainstream articles over the
    /// fourteen default sources.
    pub fn full_scale() -> Self {
        let counts = [2575, 322, 322, 420, 383, 15, 14, 14, 15, 14, 14, 14, 50, 51];
        Self::base(
            roster_with_counts(counts),
            SignalPlan {
                lexical: 0.5,
                genre: 1.0,
                topic: 1.0,
                persuasion: 0.9,
                source_style: 0.3,
                credibility_register: 0.0,
                lexical_sources: None,
            },
        )
    }

    /// Distribution-shift demonstration corpus: class words appear only in the
    /// high-credibility mainstream outlets (all of which train under the credibility
    /// split), low-credibility outlets of both classes share a register, persuasion
    /// counts carry a strong class signal everywhere, and the low-credibility mainstream
    /// outlets are numerous enough to dominate the shifted test sets. Meant to be used
    /// with [`SyntheticEmbeddingSpec::default`].
    pub fn robustness_demo() -> Self {
        let counts = [400, 50, 50, 40, 40, 40, 40, 40, 800, 40, 40, 40, 40, 800];
        let lexical_sources = SOURCE_ROSTER
            .iter()
            .filter(|(_, corpus, _, cred)| *corpus == CorpusKind::Mainstream && *cred == Credibility::High)
            .map(|(name, ..)| name.to_string())
            .collect();
        let mut spec = Self::base(
            roster_with_counts(counts),
            SignalPlan {
                lexical: 0.2,
                genre: 0.0,
                topic: 0.0,
                persuasion: 0.9,
                source_style: 1.0,
                credibility_register: 0.18,
                lexical_sources: Some(lexical_sources),
            },
        );
        spec.persuasion_rates = sparse_persuasion_rates();
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSyntheticSpec(m));
        if self.sources.is_empty() {
            return bad("no sources".into());
        }
        let s = &self.signal;
        for (name, v) in [
            ("lexical", s.lexical),
            ("genre", s.genre),
            ("topic", s.topic),
            ("persuasion", s.persuasion),
            ("source_style", s.source_style),
            ("credibility_register", s.credibility_register),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} strength {v} outside [0, 1]"));
            }
        }
        if !(0.0..=0.5).contains(&self.max_token_share) {
            return bad(format!("max_token_share {} outside [0, 0.5]", self.max_token_share));
        }
        if self.text_length == 0 {
            return bad("text_length must be positive".into());
        }
        if (s.lexical + s.source_style + s.credibility_register) * self.max_token_share > 1.0 {
            return bad("lexical, register and source shares sum past 1".into());
        }
        let reserved = 3 * self.class_block_size + self.sources.len() * self.source_block_size;
        if self.class_block_size == 0 || self.source_block_size == 0 || self.vocabulary_size <= reserved {
            return bad(format!(
                "vocabulary of {} cannot hold {} reserved words plus background",
                self.vocabulary_size, reserved
            ));
        }
        let mut names = std::collections::HashSet::new();
        for src in &self.sources {
            if !names.insert(src.source.as_str()) {
                return bad(format!("duplicate source {:?}", src.source));
            }
            if src.corpus == CorpusKind::Ppn && src.credibility != Credibility::Low {
                return bad(format!("PPN source {:?} must have low credibility", src.source));
            }
        }
        if let Some(list) = &s.lexical_sources {
            if let Some(unknown) = list.iter().find(|n| !names.contains(n.as_str())) {
                return bad(format!("lexical_sources names unknown source {unknown:?}"));
            }
        }
        let simplex = |p: &[f64]| p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        for label in 0..2 {
            if !simplex(&self.genre_probs[label]) || !simplex(&self.topic_probs[label]) {
                return bad(format!("genre/topic probabilities for label {label} must sum to 1"));
            }
            if self.persuasion_rates[label].iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
                return bad("persuasion rates must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    /// Genre probabilities actually sampled for `label`.
    pub fn effective_genre(&self, label: Label) -> [f64; NUM_GENRES] {
        mix(&self.genre_probs, label, self.signal.genre)
    }

    pub fn effective_topic(&self, label: Label) -> [f64; NUM_TOPICS] {
        mix(&self.topic_probs, label, self.signal.topic)
    }

    pub fn effective_persuasion(&self, label: Label) -> [f64; NUM_FINE] {
        mix(&self.persuasion_rates, label, self.signal.persuasion)
    }

    pub fn token_shares(&self, source: &str) -> TokenShares {
        let lexical_here = self
            .signal
            .lexical_sources
            .as_ref()
            .is_none_or(|list| list.iter().any(|n| n == source));
        let low = self
            .sources
            .iter()
            .any(|s| s.source == source && s.credibility == Credibility::Low);
        TokenShares {
            class: if lexical_here { self.signal.lexical * self.max_token_share } else { 0.0 },
            register: if low { self.signal.credibility_register * self.max_token_share } else { 0.0 },
            source: self.signal.source_style * self.max_token_share,
        }
    }

    pub fn source_metas(&self) -> Vec<SourceMeta> {
        self.sources
            .iter()
            .map(|s| SourceMeta {
                source: s.source.clone(),
                corpus: s.corpus,
                leaning: s.leaning,
                credibility: s.credibility,
            })
            .collect()
    }
}

fn mix<const N: usize>(probs: &[[f64; N]; 2], label: Label, strength: f64) -> [f64; N] {
    let own = &probs[label.as_u8() as usize];
    let mut out = [0.0; N];
    for i in 0..N {
        let shared = 0.5 * (probs[0][i] + probs[1][i]);
        out[i] = strength * own[i] + (1.0 - strength) * shared;
    }
    out
}

/// Which block a vocabulary word belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordBlock {
    Background,
    Class(Label),
    Register,
    Source(usize),
}

#[derive(Debug, Clone)]
pub struct SyntheticVocabulary {
    pub words: Vec<String>,
    pub blocks: Vec<WordBlock>,
    background: std::ops::Range<usize>,
    class: [std::ops::Range<usize>; 2],
    register: std::ops::Range<usize>,
    source: Vec<std::ops::Range<usize>>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(mut idx: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut w = String::with_capacity(6);
    for _ in 0..3 {
        let syl = idx % n;
        idx /= n;
        w.push(CONSONANTS[syl / VOWELS.len()] as char);
        w.push(VOWELS[syl % VOWELS.len()] as char);
    }
    w
}

impl SyntheticVocabulary {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let v = spec.vocabulary_size;
        let reserved = 3 * spec.class_block_size + spec.sources.len() * spec.source_block_size;
        let bg_end = v - reserved;
        let c0 = bg_end..bg_end + spec.class_block_size;
        let c1 = c0.end..c0.end + spec.class_block_size;
        let register = c1.end..c1.end + spec.class_block_size;
        let source: Vec<_> = (0..spec.sources.len())
            .map(|i| {
                let start = register.end + i * spec.source_block_size;
                start..start + spec.source_block_size
            })
            .collect();
        let mut blocks = vec![WordBlock::Background; v];
        for i in c0.clone() {
            blocks[i] = WordBlock::Class(Label::Mainstream);
        }
        for i in c1.clone() {
            blocks[i] = WordBlock::Class(Label::Propaganda);
        }
        for i in register.clone() {
            blocks[i] = WordBlock::Register;
        }
        for (s, r) in source.iter().enumerate() {
            for i in r.clone() {
                blocks[i] = WordBlock::Source(s);
            }
        }
        SyntheticVocabulary {
            words: (0..v).map(pseudo_word).collect(),
            blocks,
            background: 0..bg_end,
            class: [c0, c1],
            register,
            source,
        }
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let registry = TechniqueRegistry::default();
    let vocab = SyntheticVocabulary::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::with_capacity(spec.sources.iter().map(|s| s.count).sum());

    for (src_idx, src) in spec.sources.iter().enumerate() {
        let label = src.corpus.label();
        let genre_p = spec.effective_genre(label);
        let topic_p = spec.effective_topic(label);
        let rates = spec.effective_persuasion(label);
        let shares = spec.token_shares(&src.source);
        let slug = slug(&src.source);

        for k in 0..src.count {
            let genre = Genre::from_index(sample_categorical(&mut rng, &genre_p)).expect("genre index");
            let topic = sample_categorical(&mut rng, &topic_p);
            let fine = rates.iter().map(|&r| sample_poisson(&mut rng, r)).collect();
            let annotation = ConceptAnnotation::from_fine(genre, topic, fine, &registry)?;

            let mut text = String::with_capacity(spec.text_length * 7);
            for t in 0..spec.text_length {
                let u: f64 = rng.random();
                let range = if u < shares.class {
                    &vocab.class[label.as_u8() as usize]
                } else if u < shares.class + shares.register {
                    &vocab.register
                } else if u < shares.class + shares.register + shares.source {
                    &vocab.source[src_idx]
                } else {
                    &vocab.background
                };
                let w = rng.random_range(range.clone());
                if t > 0 {
                    text.push(' ');
                }
                text.push_str(&vocab.words[w]);
            }
            text.push('.');

            articles.push(Article {
                id: format!("{slug}-{k:05}"),
                text,
                source: src.source.clone(),
                label,
                language: spec.language.clone(),
                annotation: Some(annotation),
            });
        }
    }
    Corpus::new(articles, spec.source_metas())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEmbeddingSpec {
    pub dimension: usize,
    /// Standard deviation of each block's shared direction (background is centred on 0).
    pub centroid_scale: f64,
    /// Standard deviation of per-word noise around the block direction.
    pub word_noise: f64,
}

impl Default for SyntheticEmbeddingSpec {
    fn default() -> Self {
        SyntheticEmbeddingSpec {
            dimension: 300,
            centroid_scale: 0.07,
            word_noise: 0.1,
        }
    }
}

/// Word vectors for the synthetic vocabulary: words of one block cluster around a shared
/// random direction, the way related words cluster in trained static embeddings.
pub fn generate_synthetic_embeddings(
    spec: &SyntheticSpec,
    emb: &SyntheticEmbeddingSpec,
    seed: u64,
) -> Result<EmbeddingTable<f64>> {
    spec.validate()?;
    let vocab = SyntheticVocabulary::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let centroid = Normal::new(0.0, emb.centroid_scale).map_err(|e| Error::InvalidSyntheticSpec(e.to_string()))?;
    let noise = Normal::new(0.0, emb.word_noise).map_err(|e| Error::InvalidSyntheticSpec(e.to_string()))?;
    let mut draw = |d: &Normal<f64>| -> Vec<f64> { (0..emb.dimension).map(|_| d.sample(&mut rng)).collect() };

    let class_dirs = [draw(&centroid), draw(&centroid)];
    let register_dir = draw(&centroid);
    let source_dirs: Vec<_> = spec.sources.iter().map(|_| draw(&centroid)).collect();
    let zero = vec![0.0; emb.dimension];
    let mut entries = Vec::with_capacity(vocab.words.len());
    for (word, block) in vocab.words.iter().zip(&vocab.blocks) {
        let base = match block {
            WordBlock::Background => &zero,
            WordBlock::Class(l) => &class_dirs[l.as_u8() as usize],
            WordBlock::Register => &register_dir,
            WordBlock::Source(s) => &source_dirs[*s],
        };
        let v = base.iter().zip(draw(&noise)).map(|(b, n)| b + n).collect();
        entries.push((word.clone(), v));
    }
    EmbeddingTable::from_entries(emb.dimension, entries, OovPolicy::Skip)
}

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last category with non-zero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn sample_poisson<R: Rng>(rng: &mut R, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive finite rate").sample(rng) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let spec = SyntheticSpec::full_scale();
        let pos: usize = spec.sources.iter().filter(|s| s.corpus == CorpusKind::Ppn).map(|s| s.count).sum();
        let neg: usize = spec.sources.iter().filter(|s| s.corpus == CorpusKind::Mainstream).map(|s| s.count).sum();
        assert_eq!((pos, neg), (3219, 1004));
    }

    #[test]
    fn null_signal_makes_classes_identical() {
        let mut spec = SyntheticSpec::full_scale();
        spec.signal = SignalPlan::null();
        for f in [SyntheticSpec::effective_genre, |s: &SyntheticSpec, l| {
            let t = s.effective_topic(l);
            [t[0], t[1], t[2]]
        }] {
            assert_eq!(f(&spec, Label::Mainstream), f(&spec, Label::Propaganda));
        }
        assert_eq!(spec.effective_persuasion(Label::Mainstream), spec.effective_persuasion(Label::Propaganda));
        assert_eq!(spec.effective_topic(Label::Mainstream), spec.effective_topic(Label::Propaganda));
        for s in &spec.sources {
            assert_eq!(spec.token_shares(&s.source), TokenShares::default());
        }
    }

    #[test]
    fn register_only_in_low_credibility_sources() {
        let mut spec = SyntheticSpec::robustness_demo();
        for s in &mut spec.sources {
            s.count = 5;
        }
        let vocab = SyntheticVocabulary::new(&spec);
        let register: std::collections::HashSet<&str> = vocab
            .words
            .iter()
            .zip(&vocab.blocks)
            .filter(|(_, b)| **b == WordBlock::Register)
            .map(|(w, _)| w.as_str())
            .collect();
        let corpus = generate_synthetic_corpus(&spec, 3).unwrap();
        for a in &corpus.articles {
            let hits = a.text.trim_end_matches('.').split(' ').filter(|w| register.contains(w)).count();
            let low = corpus.source_meta(&a.source).unwrap().credibility == Credibility::Low;
            assert_eq!(hits > 0, low, "{}: {hits} register tokens", a.source);
        }
    }

    #[test]
    fn token_shares_cannot_exceed_one() {
        let mut spec = SyntheticSpec::robustness_demo();
        spec.signal.lexical = 1.0;
        spec.signal.credibility_register = 1.0;
        assert!(matches!(spec.validate(), Err(Error::InvalidSyntheticSpec(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SyntheticSpec::full_scale();
        spec.signal.persuasion = 1.5;
        assert!(matches!(generate_synthetic_corpus(&spec, 1), Err(Error::InvalidSyntheticSpec(_))));
        let mut spec = SyntheticSpec::full_scale();
        spec.sources.clear();
        assert!(matches!(generate_synthetic_corpus(&spec, 1), Err(Error::InvalidSyntheticSpec(_))));
    }

    #[test]
    fn pseudo_words_unique() {
        let spec = SyntheticSpec::full_scale();
        let vocab = SyntheticVocabulary::new(&spec);
        let set: std::collections::HashSet<_> = vocab.words.iter().collect();
        assert_eq!(set.len(), vocab.words.len());
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("War on Fakes"), "war-on-fakes");
        assert_eq!(slug("USA Today"), "usa-today");
    }
}
