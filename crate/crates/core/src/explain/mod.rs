//! Exact Shapley values over feature groups (text, genre, topic, persuasion).
//!
//! The players are the groups of the feature layout. A coalition keeps its groups' slices
//! from the sample and takes every other slice from a baseline vector; its value is the
//! model score (post-sigmoid). With at most four groups all 2^n coalitions are enumerated.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureLayout, FeatureMatrix, FeatureVector};
use crate::model::MlpModel;
use crate::scalar::Scalar;

/// Reference input that "absent" groups are replaced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePolicy {
    /// Column means of the training features.
    #[default]
    TrainMean,
    Zeros,
}

impl FromStr for BaselinePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train-mean" => Ok(BaselinePolicy::TrainMean),
            "zeros" => Ok(BaselinePolicy::Zeros),
            other => Err(format!("unknown baseline policy {other:?} (train-mean, zeros)")),
        }
    }
}

pub fn baseline_vector<T: Scalar>(policy: BaselinePolicy, train: &FeatureMatrix<T>) -> FeatureVector<T> {
    let values = match policy {
        BaselinePolicy::TrainMean => train.column_mean(),
        BaselinePolicy::Zeros => vec![T::zero(); train.layout.len()],
    };
    FeatureVector {
        values,
        layout: train.layout,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAttribution {
    /// One value per group present in the layout, in layout order.
    pub values: Vec<(FeatureGroup, f64)>,
    pub baseline_score: f64,
    pub sample_score: f64,
}

impl GroupAttribution {
    pub fn get(&self, group: FeatureGroup) -> Option<f64> {
        self.values.iter().find(|(g, _)| *g == group).map(|(_, v)| *v)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().map(|(_, v)| v).sum()
    }
}

/// `|S|! (n - |S| - 1)! / n!` for every coalition size `|S|` in `0..n`.
fn shapley_weights(n: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    (0..n).map(|s| fact(s) * fact(n - s - 1) / fact(n)).collect()
}

/// Writes the `2^n` coalition inputs for one sample into `rows` (bit `g` of the row index set
/// means group `g` comes from `x`).
fn fill_coalitions<T: Scalar>(rows: &mut ndarray::ArrayViewMut2<'_, T>, x: &[T], baseline: &[T], groups: &[Range<usize>]) {
    for (mask, mut row) in rows.rows_mut().into_iter().enumerate() {
        for (g, range) in groups.iter().enumerate() {
            let src = if mask & (1 << g) != 0 { x } else { baseline };
            for k in range.clone() {
                row[k] = src[k];
            }
        }
    }
}

fn combine(values: &[f64], groups: &[FeatureGroup], weights: &[f64]) -> GroupAttribution {
    let n = groups.len();
    let full = (1usize << n) - 1;
    let phi = (0..n)
        .map(|i| {
            let bit = 1 << i;
            let sum: f64 = (0..=full)
                .filter(|s| s & bit == 0)
                .map(|s| weights[(s as u32).count_ones() as usize] * (values[s | bit] - values[s]))
                .sum();
            (groups[i], sum)
        })
        .collect();
    GroupAttribution {
        values: phi,
        baseline_score: values[0],
        sample_score: values[full],
    }
}

fn check_layouts(model_dim: usize, a: FeatureLayout, b: FeatureLayout) -> Result<()> {
    if a != b {
        return Err(Error::ModeMismatch(format!(
            "sample is {} (width {}) but baseline is {} (width {})",
            a.mode,
            a.len(),
            b.mode,
            b.len()
        )));
    }
    if a.len() != model_dim {
        return Err(Error::InputDimension {
            expected: model_dim,
            found: a.len(),
        });
    }
    Ok(())
}

/// Exact group Shapley values of `model`'s score at `x` relative to `baseline`.
pub fn group_shapley<T: Scalar>(model: &MlpModel<T>, x: &FeatureVector<T>, baseline: &FeatureVector<T>) -> Result<GroupAttribution> {
    check_layouts(model.input_dim(), x.layout, baseline.layout)?;
    let (names, ranges): (Vec<_>, Vec<_>) = x.layout.groups().into_iter().unzip();
    let mut rows = Array2::zeros((1 << ranges.len(), x.len()));
    fill_coalitions(&mut rows.view_mut(), &x.values, &baseline.values, &ranges);
    let scores: Vec<f64> = model.scores(rows.view())?.iter().map(|s| s.as_f64()).collect();
    Ok(combine(&scores, &names, &shapley_weights(names.len())))
}

/// [`group_shapley`] for every row of `samples`, batching the coalition forward passes.
pub fn explain_matrix<T: Scalar>(
    model: &MlpModel<T>,
    samples: &FeatureMatrix<T>,
    baseline: &FeatureVector<T>,
) -> Result<Vec<GroupAttribution>> {
    check_layouts(model.input_dim(), samples.layout, baseline.layout)?;
    let (names, ranges): (Vec<_>, Vec<_>) = samples.layout.groups().into_iter().unzip();
    let weights = shapley_weights(names.len());
    let per = 1usize << ranges.len();
    let chunk = 256;
    let mut out = Vec::with_capacity(samples.len());
    let data = samples.view();
    for start in (0..samples.len()).step_by(chunk) {
        let end = (start + chunk).min(samples.len());
        let mut rows = Array2::zeros(((end - start) * per, samples.layout.len()));
        for (k, i) in (start..end).enumerate() {
            let x = data.row(i);
            let x = x.as_slice().expect("row-major features");
            let mut block = rows.slice_mut(ndarray::s![k * per..(k + 1) * per, ..]);
            fill_coalitions(&mut block, x, &baseline.values, &ranges);
        }
        let scores: Vec<f64> = model.scores(rows.view())?.iter().map(|s| s.as_f64()).collect();
        out.extend(scores.chunks(per).map(|v| combine(v, &names, &weights)));
    }
    Ok(out)
}

/// Mean of `|value|` per group. Errors on an empty set.
pub fn mean_abs(attributions: &[GroupAttribution]) -> Result<Vec<(FeatureGroup, f64)>> {
    let first = attributions.first().ok_or(Error::EmptySplit("test"))?;
    Ok(first
        .values
        .iter()
        .map(|&(g, _)| {
            let sum: f64 = attributions.iter().filter_map(|a| a.get(g)).map(f64::abs).sum();
            (g, sum / attributions.len() as f64)
        })
        .collect())
}

/// One explained split: per-sample attributions and their mean absolute values.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitExplanation {
    pub split: String,
    pub ids: Vec<String>,
    pub samples: Vec<GroupAttribution>,
    pub mean_abs: Vec<(FeatureGroup, f64)>,
}

impl SplitExplanation {
    pub fn largest_group(&self) -> Option<FeatureGroup> {
        self.mean_abs
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(g, _)| *g)
    }
}

pub fn explain_split<T: Scalar>(
    split: &str,
    model: &MlpModel<T>,
    test: &FeatureMatrix<T>,
    baseline: &FeatureVector<T>,
) -> Result<SplitExplanation> {
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let samples = explain_matrix(model, test, baseline)?;
    Ok(SplitExplanation {
        split: split.to_string(),
        ids: test.ids.clone(),
        mean_abs: mean_abs(&samples)?,
        samples,
    })
}

#[derive(Debug, Serialize)]
struct SampleLine<'a> {
    split: &'a str,
    id: &'a str,
    #[serde(flatten)]
    values: std::collections::BTreeMap<&'static str, f64>,
    baseline_score: f64,
    sample_score: f64,
}

/// `split,group,mean_abs_value` rows.
pub fn explanation_csv(splits: &[SplitExplanation]) -> String {
    let mut out = String::from("split,group,mean_abs_value\n");
    for s in splits {
        for (g, v) in &s.mean_abs {
            let _ = writeln!(out, "{},{g},{v}", s.split);
        }
    }
    out
}

pub fn write_explanations(splits: &[SplitExplanation], csv_path: &Path, jsonl_path: &Path) -> Result<()> {
    std::fs::write(csv_path, explanation_csv(splits)).map_err(|e| Error::io(csv_path, e))?;
    let mut lines = String::new();
    for s in splits {
        for (id, a) in s.ids.iter().zip(&s.samples) {
            let line = SampleLine {
                split: &s.split,
                id,
                values: a.values.iter().map(|(g, v)| (g.as_str(), *v)).collect(),
                baseline_score: a.baseline_score,
                sample_score: a.sample_score,
            };
            lines.push_str(&serde_json::to_string(&line)?);
            lines.push('\n');
        }
    }
    std::fs::write(jsonl_path, lines).map_err(|e| Error::io(jsonl_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::features::FeatureMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> FeatureLayout {
        FeatureLayout::new(FeatureMode::Hybrid, 6)
    }

    fn random_vec(rng: &mut ChaCha8Rng, l: FeatureLayout) -> FeatureVector<f64> {
        FeatureVector::new((0..l.len()).map(|_| rng.random_range(-2.0..2.0)).collect(), l).unwrap()
    }

    #[test]
    fn weights_sum_to_one_over_coalitions() {
        // sum over subsets not containing i: C(n-1, s) * w(s) = 1
        let w = shapley_weights(4);
        let binom = [1.0, 3.0, 3.0, 1.0];
        let total: f64 = w.iter().zip(binom).map(|(a, b)| a * b).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn null_player_when_sample_is_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MlpModel::<f64>::init(layout().len(), 4);
        let x = random_vec(&mut rng, layout());
        let a = group_shapley(&m, &x, &x).unwrap();
        assert!(a.values.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn dummy_groups_get_zero() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = MlpModel::<f64>::init(l.len(), 8);
        for j in l.text().end..l.len() {
            m.w1.column_mut(j).fill(0.0);
        }
        let (x, b) = (random_vec(&mut rng, l), random_vec(&mut rng, l));
        let a = group_shapley(&m, &x, &b).unwrap();
        for g in [FeatureGroup::Genre, FeatureGroup::Topic, FeatureGroup::Persuasion] {
            assert!(a.get(g).unwrap().abs() < 1e-15);
        }
        let expected = m.forward(&x.values).unwrap() - m.forward(&b.values).unwrap();
        assert!((a.get(FeatureGroup::Text).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn efficiency_and_batched_agreement() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::<f64>::init(l.len(), 5);
        let b = random_vec(&mut rng, l);
        let rows: Vec<FeatureVector<f64>> = (0..300).map(|_| random_vec(&mut rng, l)).collect();
        let matrix = FeatureMatrix {
            layout: l,
            ids: (0..300).map(|i| i.to_string()).collect(),
            labels: vec![Label::Mainstream; 300],
            data: Array2::from_shape_vec((300, l.len()), rows.iter().flat_map(|r| r.values.clone()).collect()).unwrap(),
            registry_version: String::new(),
            embedding_checksum: String::new(),
        };
        let batched = explain_matrix(&m, &matrix, &b).unwrap();
        for (x, a) in rows.iter().zip(&batched) {
            let single = group_shapley(&m, x, &b).unwrap();
            assert_eq!(&single, a);
            assert!((a.total() - (a.sample_score - a.baseline_score)).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_groups_share_credit() {
        // text width 3 == genre width 3; mirror the weights so the two groups are interchangeable
        let l = FeatureLayout::new(FeatureMode::Hybrid, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = MlpModel::<f64>::init(l.len(), 2);
        for j in 6..l.len() {
            m.w1.column_mut(j).fill(0.0);
        }
        for k in 0..3 {
            let col = m.w1.column(k).to_owned();
            m.w1.column_mut(3 + k).assign(&col);
        }
        let mut x = random_vec(&mut rng, l);
        let mut b = random_vec(&mut rng, l);
        for k in 0..3 {
            x.values[3 + k] = x.values[k];
            b.values[3 + k] = b.values[k];
        }
        let a = group_shapley(&m, &x, &b).unwrap();
        let (t, g) = (a.get(FeatureGroup::Text).unwrap(), a.get(FeatureGroup::Genre).unwrap());
        assert!((t - g).abs() < 1e-12, "{t} vs {g}");
    }

    #[test]
    fn text_only_has_one_player() {
        let l = FeatureLayout::new(FeatureMode::TextOnly, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MlpModel::<f64>::init(5, 1);
        let (x, b) = (random_vec(&mut rng, l), random_vec(&mut rng, l));
        let a = group_shapley(&m, &x, &b).unwrap();
        assert_eq!(a.values.len(), 1);
        assert!((a.total() - (a.sample_score - a.baseline_score)).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MlpModel::<f64>::init(l.len(), 1);
        let x = random_vec(&mut rng, l);
        let other = FeatureLayout::new(FeatureMode::HybridLite, 23);
        assert_eq!(other.len(), l.len());
        let b = random_vec(&mut rng, other);
        assert!(matches!(group_shapley(&m, &x, &b), Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn mean_abs_properties() {
        let a = GroupAttribution {
            values: vec![(FeatureGroup::Text, -0.2), (FeatureGroup::Genre, 0.1)],
            baseline_score: 0.5,
            sample_score: 0.4,
        };
        assert_eq!(mean_abs(std::slice::from_ref(&a)).unwrap(), vec![(FeatureGroup::Text, 0.2), (FeatureGroup::Genre, 0.1)]);
        let b = GroupAttribution {
            values: vec![(FeatureGroup::Text, 0.4), (FeatureGroup::Genre, 0.0)],
            ..a.clone()
        };
        let once = mean_abs(&[a.clone(), b.clone()]).unwrap();
        let twice = mean_abs(&[a.clone(), b.clone(), a, b]).unwrap();
        for ((g1, v1), (g2, v2)) in once.iter().zip(&twice) {
            assert_eq!(g1, g2);
            assert!((v1 - v2).abs() < 1e-15);
        }
        assert!(mean_abs(&[]).is_err());
    }
}
