use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Per-example weights `1 / count(class)`, so each class carries half the total mass.
pub fn class_balanced_weights(labels: &[Label]) -> Result<Vec<f64>> {
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(labels
        .iter()
        .map(|l| 1.0 / if l.is_positive() { pos } else { neg } as f64)
        .collect())
}

/// One epoch of class-balanced draws with replacement: `labels.len()` indices.
pub fn sample_epoch(labels: &[Label], seed: u64) -> Result<Vec<usize>> {
    let weights = class_balanced_weights(labels)?;
    let dist = WeightedIndex::new(&weights).expect("weights are positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..labels.len()).map(|_| dist.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pos: usize, neg: usize) -> Vec<Label> {
        let mut v = vec![Label::Propaganda; pos];
        v.extend(vec![Label::Mainstream; neg]);
        v
    }

    #[test]
    fn balances_skewed_classes() {
        let l = labels(3219, 1004);
        let mut neg = 0usize;
        let mut total = 0usize;
        let mut seed = 0;
        while total < 100_000 {
            let idx = sample_epoch(&l, seed).unwrap();
            neg += idx.iter().filter(|&&i| !l[i].is_positive()).count();
            total += idx.len();
            seed += 1;
        }
        let frac = neg as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.01, "negative fraction {frac}");
    }

    #[test]
    fn balanced_dataset_has_equal_weights() {
        let w = class_balanced_weights(&labels(5, 5)).unwrap();
        assert!(w.iter().all(|&x| x == w[0]));
    }

    #[test]
    fn deterministic_per_seed() {
        let l = labels(30, 7);
        assert_eq!(sample_epoch(&l, 11).unwrap(), sample_epoch(&l, 11).unwrap());
        assert_ne!(sample_epoch(&l, 11).unwrap(), sample_epoch(&l, 12).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(sample_epoch(&labels(4, 0), 1), Err(Error::SingleClass)));
    }
}
