//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the libtest harness so
//! the lines always reach stdout; exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use propdet_core::annotate::TechniqueRegistry;
use propdet_core::corpus::synthetic::{generate_synthetic_corpus, generate_synthetic_embeddings, SyntheticEmbeddingSpec, SyntheticSpec};
use propdet_core::corpus::CorpusKind;
use propdet_core::eval::{aggregate, compute_metrics, run_ablation_grid, GridConfig, Metrics, RunRecord};
use propdet_core::explain::{baseline_vector, explain_split, group_shapley, BaselinePolicy};
use propdet_core::features::{featurize_corpus, FeatureGroup, FeatureLayout, FeatureMode, FeatureVector, FuseOptions};
use propdet_core::model::{MlpModel, TrainConfig};
use propdet_core::splits::{make_split, verify_assignment, SplitKind, SplitSet, SplitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------------------
// 1. Gradients against central finite differences.

/// Loss computed without the library: ReLU hidden layer, logit, stable BCE.
fn oracle_loss(m: &MlpModel<f64>, x: &[f64], y: f64) -> f64 {
    let d = x.len();
    let mut z = m.b2;
    for j in 0..d {
        let pre: f64 = (0..d).map(|k| m.w1[[j, k]] * x[k]).sum::<f64>() + m.b1[j];
        z += pre.max(0.0) * m.w2[j];
    }
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn hidden_pre(m: &MlpModel<f64>, x: &[f64], j: usize) -> f64 {
    (0..x.len()).map(|k| m.w1[[j, k]] * x[k]).sum::<f64>() + m.b1[j]
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pairs = 0;
    let mut coords = 0;
    let mut worst: f64 = 0.0;
    let mut dims = BTreeSet::new();
    for trial in 0..102 {
        let mode = FeatureMode::ALL[trial % 3];
        let layout = FeatureLayout::new(mode, 300);
        let d = layout.len();
        dims.insert(d);
        let mut m = MlpModel::<f64>::init(d, trial as u64);
        m.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        m.b2 = rng.random_range(-0.5..0.5);
        let mut x: Vec<f64> = (0..300).map(|_| rng.random_range(-0.3..0.3)).collect();
        x.extend((300..d).map(|_| f64::from(rng.random_range(0..4u8))));
        let y = (trial % 2) as u8;
        let analytic = m.backward(&x, y).unwrap();
        let mut checked_here = 0;
        for _ in 0..40 {
            // Pick a parameter: (block, row, col).
            let block = rng.random_range(0..4);
            let j = rng.random_range(0..d);
            let k = rng.random_range(0..d);
            // Perturbations of w1/b1 move one hidden pre-activation; skip it if a ReLU kink
            // lies within reach.
            if block < 2 && hidden_pre(&m, &x, j).abs() < 1e-3 {
                continue;
            }
            let (g, orig) = match block {
                0 => (analytic.w1[[j, k]], m.w1[[j, k]]),
                1 => (analytic.b1[j], m.b1[j]),
                2 => (analytic.w2[j], m.w2[j]),
                _ => (analytic.b2, m.b2),
            };
            set(&mut m, block, j, k, orig + h);
            let up = oracle_loss(&m, &x, f64::from(y));
            set(&mut m, block, j, k, orig - h);
            let down = oracle_loss(&m, &x, f64::from(y));
            set(&mut m, block, j, k, orig);
            let numeric = (up - down) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            coords += 1;
            checked_here += 1;
        }
        if checked_here > 0 {
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && pairs >= 100 && dims.len() == 3 && elapsed < Duration::from_secs(10),
        format!(
            "{pairs} pairs over dims {dims:?}, {coords} parameters, max rel err {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn set(m: &mut MlpModel<f64>, block: usize, j: usize, k: usize, v: f64) {
    match block {
        0 => m.w1[[j, k]] = v,
        1 => m.b1[j] = v,
        2 => m.w2[j] = v,
        _ => m.b2 = v,
    }
}

// ---------------------------------------------------------------------------------------
// 2. Shapley efficiency, dummy groups, and a permutation-sampling oracle.

fn random_triple(rng: &mut ChaCha8Rng, mode: FeatureMode, seed: u64) -> (MlpModel<f64>, FeatureVector<f64>, FeatureVector<f64>) {
    let layout = FeatureLayout::new(mode, 300);
    let mut m = MlpModel::<f64>::init(layout.len(), seed);
    m.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
    m.b2 = rng.random_range(-1.0..1.0);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..300).map(|_| rng.random_range(-0.5..0.5)).collect();
        v.extend((300..layout.len()).map(|_| f64::from(rng.random_range(0..5u8))));
        FeatureVector::new(v, layout).unwrap()
    };
    let x = draw(rng);
    let b = draw(rng);
    (m, x, b)
}

/// Score of the input taking the groups in `mask` from `x` and the rest from `b`.
fn coalition_score(m: &MlpModel<f64>, x: &FeatureVector<f64>, b: &FeatureVector<f64>, mask: usize) -> f64 {
    let mut v = b.values.clone();
    for (g, (_, range)) in x.layout.groups().into_iter().enumerate() {
        if mask & (1 << g) != 0 {
            v[range.clone()].copy_from_slice(&x.values[range]);
        }
    }
    m.forward(&v).unwrap()
}

fn criterion_shapley() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let modes = [FeatureMode::Hybrid, FeatureMode::HybridLite, FeatureMode::TextOnly];
    let mut worst_eff: f64 = 0.0;
    let mut worst_dummy: f64 = 0.0;
    for t in 0..1000 {
        let mode = modes[t % 3];
        let (mut m, x, b) = random_triple(&mut rng, mode, t as u64);
        let a = group_shapley(&m, &x, &b).unwrap();
        let expected = m.forward(&x.values).unwrap() - m.forward(&b.values).unwrap();
        worst_eff = worst_eff.max((a.total() - expected).abs());
        // Zero the first-layer weights reading one group's slice.
        let groups = x.layout.groups();
        let (dummy, range) = groups[t % groups.len()].clone();
        for k in range {
            m.w1.column_mut(k).fill(0.0);
        }
        let a = group_shapley(&m, &x, &b).unwrap();
        worst_dummy = worst_dummy.max(a.get(dummy).unwrap().abs());
    }

    let mut mc_ok = 0;
    let mut worst_z: f64 = 0.0;
    let perms = 20_000;
    for t in 0..20 {
        let mode = if t % 2 == 0 { FeatureMode::Hybrid } else { FeatureMode::HybridLite };
        let (m, x, b) = random_triple(&mut rng, mode, 5000 + t as u64);
        let exact = group_shapley(&m, &x, &b).unwrap();
        let n = x.layout.groups().len();
        let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
        let mut v = |mask: usize| *cache.entry(mask).or_insert_with(|| coalition_score(&m, &x, &b, mask));
        let mut sums = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..perms {
            // Fisher-Yates shuffle.
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let mut mask = 0;
            for &g in &order {
                let delta = v(mask | (1 << g)) - v(mask);
                sums[g] += delta;
                sq[g] += delta * delta;
                mask |= 1 << g;
            }
        }
        let mut all = true;
        for (g, (group, exact_v)) in exact.values.iter().enumerate() {
            let mean = sums[g] / perms as f64;
            let var = (sq[g] / perms as f64 - mean * mean).max(0.0) * perms as f64 / (perms - 1) as f64;
            let se = (var / perms as f64).sqrt();
            let z = (exact_v - mean).abs() / se.max(1e-15);
            worst_z = worst_z.max(z);
            if (exact_v - mean).abs() > 3.0 * se + 1e-12 {
                all = false;
                eprintln!("  MC mismatch: triple {t} group {group}: exact {exact_v} mc {mean} se {se}");
            }
        }
        mc_ok += all as usize;
    }
    let elapsed = start.elapsed();
    outcome(
        worst_eff < 1e-6 && worst_dummy == 0.0 && mc_ok == 20 && elapsed < Duration::from_secs(60),
        format!(
            "efficiency err {worst_eff:.1e} (1000 triples), dummy |phi| max {worst_dummy:.1e}, MC within 3 SE on {mc_ok}/20 (max {worst_z:.2} SE), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 3. Results-table arithmetic.

fn table_records(mode: FeatureMode, rows: [(f64, f64); 4]) -> Vec<RunRecord> {
    SplitKind::ALL
        .iter()
        .zip(rows)
        .map(|(&split, (acc, f1))| RunRecord {
            split,
            mode,
            seed: 0,
            metrics: Some(Metrics {
                accuracy: acc / 100.0,
                f1: f1 / 100.0,
                ..Default::default()
            }),
            error: None,
            model_path: None,
            best_epoch: 0,
            stopped_epoch: 0,
            fingerprint: format!("{split}-{mode}"),
        })
        .collect()
}

fn criterion_arithmetic() -> Outcome {
    let mut recs = table_records(FeatureMode::Hybrid, [(78.08, 87.5), (79.45, 88.37), (69.86, 81.66), (79.45, 86.95)]);
    recs.extend(table_records(FeatureMode::TextOnly, [(79.45, 88.54), (20.54, 0.0), (79.45, 88.54), (20.54, 0.0)]));
    let s = aggregate(&recs).unwrap();
    let h = s.mode(FeatureMode::Hybrid).unwrap();
    let t = s.mode(FeatureMode::TextOnly).unwrap();
    let gap = s.gap(FeatureMode::Hybrid, FeatureMode::TextOnly).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 0.01;
    outcome(
        close(h.mu_f1, 86.12) && close(h.var_f1, 9.18) && close(t.mu_f1, 44.27) && close(gap.f1_gap, 41.85),
        format!(
            "Hybrid mu {:.4} var {:.4}, Text Only mu {:.4}, F1 gap {:.4}",
            h.mu_f1, h.var_f1, t.mu_f1, gap.f1_gap
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 4. Split integrity on the full-sized corpus.

fn criterion_splits() -> Outcome {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::full_scale(), 42).unwrap();
    let mut problems = Vec::new();
    if corpus.articles.len() != 4223 {
        problems.push(format!("corpus has {} articles", corpus.articles.len()));
    }
    let all: BTreeSet<&str> = corpus.articles.iter().map(|a| a.id.as_str()).collect();
    let source_of: BTreeMap<&str, &str> = corpus.articles.iter().map(|a| (a.id.as_str(), a.source.as_str())).collect();
    let is_ppn = |src: &str| corpus.source_meta(src).unwrap().corpus == CorpusKind::Ppn;
    let mut details = Vec::new();
    for kind in SplitKind::ALL {
        let a = make_split(&corpus, &SplitSpec::with_default_map(kind, 0)).unwrap();
        if !verify_assignment(&a, &corpus).passed() {
            problems.push(format!("{kind}: library verification failed"));
        }
        let mut seen = BTreeSet::new();
        for r in &a.records {
            if !seen.insert(r.id.as_str()) {
                problems.push(format!("{kind}: {} assigned twice", r.id));
            }
        }
        let excluded: BTreeSet<&str> = a.excluded.iter().map(String::as_str).collect();
        if !seen.is_disjoint(&excluded) || seen.union(&excluded).count() != all.len() {
            problems.push(format!("{kind}: assignment plus exclusions is not the whole corpus"));
        }
        let mut sets_of_source: BTreeMap<&str, BTreeSet<SplitSet>> = BTreeMap::new();
        let mut ppn = [0usize; 3];
        for r in &a.records {
            let src = source_of[r.id.as_str()];
            sets_of_source.entry(src).or_default().insert(r.set);
            if is_ppn(src) {
                ppn[r.set as usize] += 1;
            }
        }
        if kind == SplitKind::Sources {
            for (src, sets) in &sets_of_source {
                if !is_ppn(src) && sets.len() > 1 {
                    problems.push(format!("sources: mainstream {src} in {sets:?}"));
                }
            }
        }
        if matches!(kind, SplitKind::Political | SplitKind::Credibility) {
            let n: usize = ppn.iter().sum();
            for (i, frac) in [0.8, 0.1, 0.1].into_iter().enumerate() {
                if (ppn[i] as f64 - frac * n as f64).abs() > 1.0 {
                    problems.push(format!("{kind}: PPN set {i} has {} of {n}", ppn[i]));
                }
            }
            details.push(format!("{kind} PPN {}/{}/{}", ppn[0], ppn[1], ppn[2]));
        }
    }
    let detail = if problems.is_empty() {
        format!("4 strategies disjoint and exhaustive; {}", details.join(", "))
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------------------
// 5 and 6. Robustness and attribution ordering on the demonstration corpus.

struct RobustnessRun {
    f1: BTreeMap<(SplitKind, FeatureMode), f64>,
    attributions: BTreeMap<SplitKind, BTreeMap<FeatureGroup, f64>>,
    elapsed: Duration,
}

fn robustness_run() -> RobustnessRun {
    let start = Instant::now();
    let spec = SyntheticSpec::robustness_demo();
    let corpus = generate_synthetic_corpus(&spec, 42).unwrap();
    let table = generate_synthetic_embeddings(&spec, &SyntheticEmbeddingSpec::default(), 42).unwrap();
    let reg = TechniqueRegistry::default();
    let features: BTreeMap<_, _> = [FeatureMode::Hybrid, FeatureMode::TextOnly]
        .into_iter()
        .map(|m| (m, featurize_corpus(&corpus, &table, m, FuseOptions::default(), &reg).unwrap()))
        .collect();
    let grid = GridConfig {
        splits: vec![SplitSpec::with_default_map(SplitKind::Credibility, 0), SplitSpec::new(SplitKind::Random, 0)],
        modes: vec![FeatureMode::Hybrid, FeatureMode::TextOnly],
        seeds: (0..5).collect(),
        train: TrainConfig::default(),
        workers: 1,
        model_dir: None,
    };
    let sums: Mutex<BTreeMap<SplitKind, Vec<Vec<(FeatureGroup, f64)>>>> = Mutex::new(BTreeMap::new());
    let observer = |c: propdet_core::eval::CellOutcome<'_, f64>| {
        if c.mode != FeatureMode::Hybrid {
            return;
        }
        let train = c.features.select(&c.assignment.positions(&c.features.ids, SplitSet::Train).unwrap());
        let test = c.features.select(&c.assignment.positions(&c.features.ids, SplitSet::Test).unwrap());
        let base = baseline_vector(BaselinePolicy::TrainMean, &train);
        let e = explain_split(c.split.kind.as_str(), c.model, &test, &base).unwrap();
        sums.lock().unwrap().entry(c.split.kind).or_default().push(e.mean_abs);
    };
    let records = run_ablation_grid(&corpus, &features, &grid, None, Some(&observer)).unwrap();
    let summary = aggregate(&records).unwrap();
    let f1 = summary.cells.iter().map(|c| ((c.split, c.mode), c.mean_f1 / 100.0)).collect();
    let attributions = sums
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|(kind, runs)| {
            let mut avg = BTreeMap::new();
            for run in &runs {
                for (g, v) in run {
                    *avg.entry(*g).or_insert(0.0) += v / runs.len() as f64;
                }
            }
            (kind, avg)
        })
        .collect();
    RobustnessRun {
        f1,
        attributions,
        elapsed: start.elapsed(),
    }
}

fn criterion_robustness(r: &RobustnessRun) -> Outcome {
    let get = |s, m| r.f1[&(s, m)];
    let hyb = get(SplitKind::Credibility, FeatureMode::Hybrid);
    let txt = get(SplitKind::Credibility, FeatureMode::TextOnly);
    let rnd = get(SplitKind::Random, FeatureMode::TextOnly);
    outcome(
        hyb >= 0.85 && txt <= 0.60 && rnd >= 0.80 && r.elapsed < Duration::from_secs(300),
        format!(
            "credibility Hybrid F1 {hyb:.3}, Text Only F1 {txt:.3}; random Text Only F1 {rnd:.3} (5 seeds, {:.0}s)",
            r.elapsed.as_secs_f64()
        ),
    )
}

fn largest(groups: &BTreeMap<FeatureGroup, f64>) -> FeatureGroup {
    *groups.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

fn criterion_attribution(r: &RobustnessRun) -> Outcome {
    let cred = &r.attributions[&SplitKind::Credibility];
    let rand = &r.attributions[&SplitKind::Random];
    let fmt = |g: &BTreeMap<FeatureGroup, f64>| g.iter().map(|(k, v)| format!("{k} {v:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        largest(cred) == FeatureGroup::Persuasion && largest(rand) == FeatureGroup::Text,
        format!("credibility [{}]; random [{}]", fmt(cred), fmt(rand)),
    )
}

// ---------------------------------------------------------------------------------------
// 7. Two full grid runs through the command-line tool.

fn criterion_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = Command::new(env!("CARGO_BIN_EXE_propdet"))
            .args(["ablate", "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "error")
            .output()
            .unwrap();
        if !o.status.success() {
            return outcome(false, format!("ablate failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let read = |f: &str| std::fs::read(out.join("ablate").join(f)).unwrap();
        outputs.push((read("summary_cells.csv"), read("summary_modes.csv"), read("results.csv")));
    }
    let same = outputs[0] == outputs[1];
    outcome(
        same,
        format!(
            "summary_cells.csv, summary_modes.csv and results.csv {} across two 60-cell runs",
            if same { "byte-identical" } else { "differ" }
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 8. Metric definitions against confusion counts tallied by hand.

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let threshold = rng.random_range(0.05..0.95);
        // table[label][predicted]
        let mut table = [[0usize; 2]; 2];
        for i in 0..n {
            let predicted = usize::from(scores[i] >= threshold);
            table[labels[i] as usize][predicted] += 1;
        }
        let (tp, fp, tn, fn_) = (table[1][1], table[0][1], table[0][0], table[1][0]);
        let accuracy = (tp + tn) as f64 / n as f64;
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let m = compute_metrics(&scores, &labels, threshold).unwrap();
        if (m.tp, m.fp, m.tn, m.fn_) != (tp, fp, tn, fn_)
            || m.accuracy != accuracy
            || m.precision != precision
            || m.recall != recall
            || m.f1 != f1
        {
            mismatches += 1;
        }
    }
    // Every article predicted mainstream on a test set with 20.54% mainstream.
    let labels: Vec<u8> = (0..146).map(|i| u8::from(i >= 30)).collect();
    let m = compute_metrics(&vec![0.1; 146], &labels, 0.5).unwrap();
    let all_negative = m.f1 == 0.0 && m.precision == 0.0 && m.recall == 0.0 && (100.0 * m.accuracy - 20.54).abs() < 0.01;
    outcome(
        mismatches == 0 && all_negative,
        format!(
            "{mismatches} mismatches on 1000 random sets; all-negative set gives F1 {} at accuracy {:.2}%",
            m.f1,
            100.0 * m.accuracy
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient oracle", criterion_gradients()),
        (2, "Shapley efficiency and axioms", criterion_shapley()),
        (3, "results-table arithmetic", criterion_arithmetic()),
        (4, "split integrity", criterion_splits()),
    ];
    let run = robustness_run();
    results.push((5, "robustness under distribution shift", criterion_robustness(&run)));
    results.push((6, "attribution ordering", criterion_attribution(&run)));
    results.push((7, "determinism", criterion_determinism()));
    results.push((8, "metric definitions", criterion_metrics()));
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} ({name}): {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
