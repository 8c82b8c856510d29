//! Seed averaging and across-split summaries, in percentage points.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::splits::SplitKind;

/// Arithmetic mean and sample variance (`n - 1` denominator; 0 for a single value).
pub fn mean_and_sample_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub split: SplitKind,
    pub mode: FeatureMode,
    pub seeds: usize,
    pub mean_acc: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: FeatureMode,
    pub mu_acc: f64,
    pub mu_f1: f64,
    pub var_f1: f64,
}

/// Difference of across-split means between two modes, recomputed from the cell means
/// (never taken from a quoted figure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGap {
    pub mode: FeatureMode,
    pub against: FeatureMode,
    pub acc_gap: f64,
    pub f1_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub splits: Vec<SplitKind>,
    pub modes: Vec<FeatureMode>,
    pub cells: Vec<CellSummary>,
    pub per_mode: Vec<ModeSummary>,
    pub gaps: Vec<ModeGap>,
}

impl Summary {
    pub fn cell(&self, split: SplitKind, mode: FeatureMode) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.split == split && c.mode == mode)
    }

    pub fn mode(&self, mode: FeatureMode) -> Option<&ModeSummary> {
        self.per_mode.iter().find(|m| m.mode == mode)
    }

    pub fn gap(&self, mode: FeatureMode, against: FeatureMode) -> Option<&ModeGap> {
        self.gaps.iter().find(|g| g.mode == mode && g.against == against)
    }

    /// `split,mode,mean_acc,mean_f1`
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("split,mode,mean_acc,mean_f1\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{:.4},{:.4}", c.split, c.mode, c.mean_acc, c.mean_f1);
        }
        out
    }

    /// `mode,mu_f1,var_f1`
    pub fn modes_csv(&self) -> String {
        let mut out = String::from("mode,mu_f1,var_f1\n");
        for m in &self.per_mode {
            let _ = writeln!(out, "{},{:.4},{:.4}", m.mode, m.mu_f1, m.var_f1);
        }
        out
    }

    /// Plain-text results table: one row per mode,
    /// an Acc./F1 column pair per split.
    pub fn render_table(&self) -> String {
        let mut header = format!("{:<12}", "");
        let mut sub = format!("{:<12}", "Mode");
        for s in &self.splits {
            let _ = write!(header, "| {:^15} ", s.display_name());
            let _ = write!(sub, "| {:>6}  {:>6}  ", "Acc.", "F1");
        }
        let _ = write!(header, "| {:^15}", "Average");
        let _ = write!(sub, "| {:>6}  {:>6}", "mu F1", "var");
        let mut out = format!("{header}\n{sub}\n{}\n", "-".repeat(sub.len()));
        for m in &self.modes {
            let _ = write!(out, "{:<12}", m.display_name());
            for s in &self.splits {
                match self.cell(*s, *m) {
                    Some(c) => {
                        let _ = write!(out, "| {:>6.2}  {:>6.2}  ", c.mean_acc, c.mean_f1);
                    }
                    None => {
                        let _ = write!(out, "| {:>6}  {:>6}  ", "-", "-");
                    }
                }
            }
            if let Some(ms) = self.mode(*m) {
                let _ = write!(out, "| {:>6.2}  {:>6.2}", ms.mu_f1, ms.var_f1);
            }
            out.push('\n');
        }
        for g in &self.gaps {
            let _ = writeln!(
                out,
                "{} vs {}: {:+.2} accuracy, {:+.2} F1 (across-split means)",
                g.mode.display_name(),
                g.against.display_name(),
                g.acc_gap,
                g.f1_gap
            );
        }
        out
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("summary_cells.csv", self.cells_csv()), ("summary_modes.csv", self.modes_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// `split,mode,seed,accuracy,f1,precision,recall`, one row per completed record, grid order.
pub fn results_csv(records: &[RunRecord]) -> String {
    let mut sorted: Vec<&RunRecord> = records.iter().filter(|r| r.is_complete()).collect();
    sorted.sort_by_key(|r| (r.split, r.mode, r.seed));
    let mut out = String::from("split,mode,seed,accuracy,f1,precision,recall\n");
    for r in sorted {
        let m = r.metrics.as_ref().expect("filtered to complete records");
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.split, r.mode, r.seed, m.accuracy, m.f1, m.precision, m.recall
        );
    }
    out
}

/// Seed-means per (split, mode), then mean and sample variance of F1 across splits per mode,
/// all in percentage points. Every (split, mode, seed) combination seen in `records` must
/// have a completed record; otherwise the missing cells are reported.
pub fn aggregate(records: &[RunRecord]) -> Result<Summary> {
    let splits: BTreeSet<SplitKind> = records.iter().map(|r| r.split).collect();
    let modes: BTreeSet<FeatureMode> = records.iter().map(|r| r.mode).collect();
    let seeds: BTreeSet<u64> = records.iter().map(|r| r.seed).collect();
    if records.is_empty() {
        return Err(Error::IncompleteGrid(vec!["no records".into()]));
    }
    let mut by_cell: BTreeMap<(SplitKind, FeatureMode), BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    for r in records {
        if let Some(m) = &r.metrics {
            by_cell
                .entry((r.split, r.mode))
                .or_default()
                .insert(r.seed, (100.0 * m.accuracy, 100.0 * m.f1));
        }
    }
    let mut missing = Vec::new();
    for &s in &splits {
        for &m in &modes {
            for &seed in &seeds {
                if !by_cell.get(&(s, m)).is_some_and(|c| c.contains_key(&seed)) {
                    missing.push(format!("{s}/{m}/seed {seed}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }

    let mut cells = Vec::new();
    for (&(split, mode), per_seed) in &by_cell {
        let accs: Vec<f64> = per_seed.values().map(|v| v.0).collect();
        let f1s: Vec<f64> = per_seed.values().map(|v| v.1).collect();
        cells.push(CellSummary {
            split,
            mode,
            seeds: per_seed.len(),
            mean_acc: mean_and_sample_variance(&accs).0,
            mean_f1: mean_and_sample_variance(&f1s).0,
        });
    }
    let per_mode: Vec<ModeSummary> = modes
        .iter()
        .map(|&mode| {
            let of_mode: Vec<&CellSummary> = cells.iter().filter(|c| c.mode == mode).collect();
            let f1s: Vec<f64> = of_mode.iter().map(|c| c.mean_f1).collect();
            let accs: Vec<f64> = of_mode.iter().map(|c| c.mean_acc).collect();
            let (mu_f1, var_f1) = mean_and_sample_variance(&f1s);
            ModeSummary {
                mode,
                mu_acc: mean_and_sample_variance(&accs).0,
                mu_f1,
                var_f1,
            }
        })
        .collect();
    let mut gaps = Vec::new();
    let text = per_mode.iter().find(|m| m.mode == FeatureMode::TextOnly);
    for m in per_mode.iter().filter(|m| m.mode != FeatureMode::TextOnly) {
        if let Some(t) = text {
            gaps.push(ModeGap {
                mode: m.mode,
                against: t.mode,
                acc_gap: m.mu_acc - t.mu_acc,
                f1_gap: m.mu_f1 - t.mu_f1,
            });
        }
    }
    Ok(Summary {
        splits: splits.into_iter().collect(),
        modes: modes.into_iter().collect(),
        cells,
        per_mode,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Metrics;

    /// Records whose metrics carry the given percentages (accuracy, F1) for one seed.
    fn records(mode: FeatureMode, rows: &[(SplitKind, f64, f64)]) -> Vec<RunRecord> {
        rows.iter()
            .map(|&(split, acc, f1)| RunRecord {
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
                fingerprint: String::new(),
            })
            .collect()
    }

    use SplitKind::*;

    #[test]
    fn sample_variance_convention() {
        let (mu, var) = mean_and_sample_variance(&[87.5, 88.37, 81.66, 86.95]);
        assert!((mu - 86.12).abs() < 0.01);
        assert!((var - 9.18).abs() < 0.01);
        assert_eq!(mean_and_sample_variance(&[3.0, 3.0, 3.0]).1, 0.0);
    }

    #[test]
    fn gap_between_modes() {
        let mut r = records(FeatureMode::Hybrid, &[(Random, 78.08, 87.5), (Sources, 79.45, 88.37), (Political, 69.86, 81.66), (Credibility, 79.45, 86.95)]);
        r.extend(records(FeatureMode::TextOnly, &[(Random, 79.45, 88.54), (Sources, 20.54, 0.0), (Political, 79.45, 88.54), (Credibility, 20.54, 0.0)]));
        let s = aggregate(&r).unwrap();
        assert!((s.mode(FeatureMode::TextOnly).unwrap().mu_f1 - 44.27).abs() < 1e-9);
        let g = s.gap(FeatureMode::Hybrid, FeatureMode::TextOnly).unwrap();
        assert!((g.f1_gap - 41.85).abs() < 0.01);
        // The quoted accuracy gap is +26.89; the table's own accuracies give +26.72.
        assert!((g.acc_gap - 26.72).abs() < 0.01);
        let table = s.render_table();
        assert!(table.contains("Hybrid") && table.contains("Credibility"));
    }

    #[test]
    fn incomplete_grid_names_missing_cells() {
        let mut r = records(FeatureMode::Hybrid, &[(Random, 90.0, 87.5), (Sources, 90.0, 88.37)]);
        r.extend(records(FeatureMode::TextOnly, &[(Random, 92.0, 88.54)]));
        match aggregate(&r) {
            Err(Error::IncompleteGrid(m)) => assert_eq!(m, vec!["sources/text-only/seed 0".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut r = records(FeatureMode::Hybrid, &[(Random, 90.0, 87.5), (Sources, 70.0, 60.0), (Political, 80.0, 81.66)]);
        let a = aggregate(&r).unwrap();
        r.reverse();
        assert_eq!(aggregate(&r).unwrap(), a);
    }
}
