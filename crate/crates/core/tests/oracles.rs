//! End-to-end checks of the core library against independent oracles.

use ndarray::Array2;
use propdet_core::annotate::{corpus_statistics, Genre, TechniqueRegistry};
use propdet_core::corpus::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use propdet_core::corpus::{CorpusKind, Label};
use propdet_core::features::{EmbeddingTable, FeatureLayout, FeatureMatrix, FeatureMode, OovPolicy};
use propdet_core::model::{train, TrainConfig};
use propdet_core::splits::{make_split, verify_assignment, SplitKind, SplitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn planted_opinion_share_is_recovered() {
    let mut spec = SyntheticSpec::full_scale();
    // 2000 propaganda articles, a handful of mainstream ones.
    let mut ppn_counts = [667, 667, 666].into_iter();
    for s in &mut spec.sources {
        s.count = match s.corpus {
            CorpusKind::Ppn => ppn_counts.next().unwrap(),
            CorpusKind::Mainstream => 5,
        };
    }
    spec.genre_probs[1] = [0.2, 0.75, 0.05];
    spec.signal.genre = 1.0;
    assert_eq!(spec.effective_genre(Label::Propaganda)[Genre::Opinion.index()], 0.75);
    let corpus = generate_synthetic_corpus(&spec, 9).unwrap();
    let report = corpus_statistics(&corpus, &TechniqueRegistry::default()).unwrap();
    let side = report.side(CorpusKind::Ppn).unwrap();
    assert_eq!(side.articles, 2000);

    let ppn: Vec<_> = corpus.articles.iter().filter(|a| a.label == Label::Propaganda).collect();
    let opinions = ppn
        .iter()
        .filter(|a| a.annotation.as_ref().unwrap().genre == Genre::Opinion)
        .count();
    let counted = opinions as f64 / ppn.len() as f64;
    let reported = side.genre[Genre::Opinion.index()];
    assert!((reported - counted).abs() < 1e-12, "{reported} vs {counted}");
    assert!((reported - 0.75).abs() <= 0.03, "{reported}");
    assert!((side.genre.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn text_vector_is_the_token_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let entries: Vec<(String, Vec<f64>)> = words
        .iter()
        .map(|w| (w.clone(), (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let table = EmbeddingTable::from_entries(16, entries.clone(), OovPolicy::Skip).unwrap();
    let tokens: Vec<&str> = (0..50).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
    let got = table.embed_text(&tokens.join(" "));

    let mut sum = [0.0f64; 16];
    for t in &tokens {
        let v = &entries.iter().find(|(w, _)| w == t).unwrap().1;
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    for (g, s) in got.iter().zip(sum) {
        assert!((g - s / 50.0).abs() < 1e-12);
    }
}

/// Two Gaussian blobs pushed apart along a random direction, labels by side.
fn separable(prefix: &str, n: usize, dim: usize, seed: u64) -> FeatureMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for k in 0..dim {
            data[[i, k]] = rng.random_range(-0.5..0.5) + sign * 0.8 * dir[k];
        }
        labels.push(if y == 1 { Label::Propaganda } else { Label::Mainstream });
    }
    FeatureMatrix {
        layout: FeatureLayout::new(FeatureMode::TextOnly, dim),
        ids: (0..n).map(|i| format!("{prefix}{i}")).collect(),
        labels,
        data,
        registry_version: String::new(),
        embedding_checksum: String::new(),
    }
}

/// Classic perceptron; returns true once an epoch passes with no mistakes.
fn perceptron_separates(m: &FeatureMatrix<f64>) -> bool {
    let dim = m.layout.len();
    let mut w = vec![0.0; dim + 1];
    for _ in 0..1000 {
        let mut mistakes = 0;
        for (row, label) in m.data.rows().into_iter().zip(&m.labels) {
            let y = if label.is_positive() { 1.0 } else { -1.0 };
            let act: f64 = row.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + w[dim];
            if y * act <= 0.0 {
                mistakes += 1;
                for (wk, x) in w.iter_mut().zip(row.iter()) {
                    *wk += y * x;
                }
                w[dim] += y;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

#[test]
fn separable_toy_set_is_fit_exactly() {
    let data = separable("t", 200, 8, 1);
    let valid = separable("v", 60, 8, 1);
    assert!(perceptron_separates(&data), "oracle says the toy set is not separable");
    let config = TrainConfig {
        learning_rate: 1e-2,
        ..Default::default()
    };
    let (model, _) = train(&data, &valid, &config).unwrap();
    let scores = model.scores(data.view()).unwrap();
    let correct = scores
        .iter()
        .zip(&data.labels)
        .filter(|(s, l)| (**s >= 0.5) == l.is_positive())
        .count();
    assert_eq!(correct, data.len());
}

#[test]
fn training_is_bitwise_deterministic() {
    let (tr, va) = (separable("t", 120, 6, 2), separable("v", 40, 6, 3));
    let config = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 15,
        seed: 7,
        ..Default::default()
    };
    let (a, ha) = train(&tr, &va, &config).unwrap();
    let (b, hb) = train(&tr, &va, &config).unwrap();
    let bits = |m: &propdet_core::Mlp| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ha, hb);
    let (c, _) = train(&tr, &va, &TrainConfig { seed: 8, ..config }).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn full_sized_corpus_splits_verify() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::full_scale(), 42).unwrap();
    assert_eq!(corpus.articles.len(), 4223);
    assert_eq!(corpus.class_counts(), (3219, 1004));
    for kind in SplitKind::ALL {
        for seed in [0, 1] {
            let a = make_split(&corpus, &SplitSpec::with_default_map(kind, seed)).unwrap();
            let r = verify_assignment(&a, &corpus);
            assert!(r.passed(), "{kind}/{seed}: {:?}", r.checks);
        }
    }
}
