use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{resolved_roles, set_sizes, SourceRole, SplitAssignment, SplitKind, SplitSet};
use crate::corpus::{Corpus, CorpusKind, Leaning};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: Option<SplitKind>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, problems: Vec<String>, ok_detail: impl Into<String>) {
        let passed = problems.is_empty();
        let detail = if passed {
            ok_detail.into()
        } else {
            let shown: Vec<_> = problems.iter().take(5).cloned().collect();
            let more = problems.len().saturating_sub(shown.len());
            if more > 0 {
                format!("{} (+{more} more)", shown.join("; "))
            } else {
                shown.join("; ")
            }
        };
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Checks the partition property, class coverage of train and the strategy's source rules.
pub fn verify_assignment(assignment: &SplitAssignment, corpus: &Corpus) -> VerificationReport {
    let spec = &assignment.spec;
    let mut report = VerificationReport {
        kind: Some(spec.kind),
        ..Default::default()
    };
    let by_id: BTreeMap<&str, usize> = corpus.articles.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();

    let mut seen: BTreeMap<&str, SplitSet> = BTreeMap::new();
    let mut problems = Vec::new();
    for r in &assignment.records {
        if !by_id.contains_key(r.id.as_str()) {
            problems.push(format!("unknown article {:?}", r.id));
        }
        if let Some(prev) = seen.insert(r.id.as_str(), r.set) {
            problems.push(format!("article {:?} assigned to both {prev} and {}", r.id, r.set));
        }
    }
    report.push("partition", problems, format!("{} articles, each in one set", seen.len()));

    let roles = resolved_roles(corpus, spec);
    let role_of = |source: &str| roles.as_ref().and_then(|r| r.get(source).copied());
    let is_ppn = |source: &str| corpus.source_meta(source).is_some_and(|m| m.corpus == CorpusKind::Ppn);

    // Articles missing from every set must belong to an excluded source.
    let problems = corpus
        .articles
        .iter()
        .filter(|a| !seen.contains_key(a.id.as_str()))
        .filter(|a| {
            let expected_out = match spec.kind {
                SplitKind::Random => false,
                SplitKind::Sources => matches!(role_of(&a.source), Some(SourceRole::Excluded)),
                _ => !is_ppn(&a.source) && matches!(role_of(&a.source), Some(SourceRole::Excluded)),
            };
            !expected_out
        })
        .map(|a| format!("article {:?} is in no set", a.id))
        .collect();
    report.push("coverage", problems, "every included article assigned");

    let train_classes: BTreeSet<_> = assignment
        .records
        .iter()
        .filter(|r| r.set == SplitSet::Train)
        .filter_map(|r| by_id.get(r.id.as_str()).map(|&i| corpus.articles[i].label))
        .collect();
    let problems = if train_classes.len() == 2 {
        Vec::new()
    } else {
        vec![format!("train holds {} class(es)", train_classes.len())]
    };
    report.push("train_both_classes", problems, "train holds both classes");

    if spec.kind == SplitKind::Random {
        return report;
    }

    let mut problems = Vec::new();
    for (id, &set) in &seen {
        let Some(&i) = by_id.get(id) else { continue };
        let a = &corpus.articles[i];
        if spec.kind != SplitKind::Sources && is_ppn(&a.source) {
            continue;
        }
        let ok = match role_of(&a.source) {
            Some(SourceRole::Train) => set == SplitSet::Train,
            Some(SourceRole::Valid) => set == SplitSet::Valid,
            Some(SourceRole::Test) => set == SplitSet::Test,
            Some(SourceRole::Shared) => set != SplitSet::Train,
            Some(SourceRole::Excluded) | None => {
                let unrated = corpus.source_meta(&a.source).is_some_and(|m| m.leaning == Leaning::Unrated);
                if spec.kind == SplitKind::Political && unrated {
                    report
                        .warnings
                        .push(format!("article {id:?} from unrated source {:?} is in {set}", a.source));
                    true
                } else {
                    false
                }
            }
        };
        if !ok {
            problems.push(format!("article {id:?} from {:?} is in {set}", a.source));
        }
    }
    report.push("source_roles", problems, "every article sits where its source role puts it");

    // Mainstream sources seen in train must not appear in valid or test.
    let mut train_sources = BTreeSet::new();
    let mut eval_sources = BTreeSet::new();
    for (id, &set) in &seen {
        let Some(&i) = by_id.get(id) else { continue };
        let a = &corpus.articles[i];
        if is_ppn(&a.source) {
            continue;
        }
        if set == SplitSet::Train {
            train_sources.insert(a.source.as_str());
        } else {
            eval_sources.insert(a.source.as_str());
        }
    }
    let problems = train_sources
        .intersection(&eval_sources)
        .map(|s| format!("mainstream source {s:?} is in train and in valid/test"))
        .collect();
    report.push("mainstream_sources_disjoint", problems, "no mainstream source straddles train and valid/test");

    if matches!(spec.kind, SplitKind::Political | SplitKind::Credibility) {
        let mut counts = [0usize; 3];
        for (id, &set) in &seen {
            if by_id.get(id).is_some_and(|&i| is_ppn(&corpus.articles[i].source)) {
                counts[set as usize] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        let target = set_sizes(n, spec.ratios);
        let problems = SplitSet::ALL
            .iter()
            .zip(counts.iter().zip(target))
            .filter(|(_, (&c, t))| c.abs_diff(*t) > 1)
            .map(|(s, (c, t))| format!("{c} PPN articles in {s}, expected {t} +/- 1"))
            .collect();
        report.push(
            "ppn_proportions",
            problems,
            format!("PPN train/valid/test = {}/{}/{}", counts[0], counts[1], counts[2]),
        );
    }
    report.warnings.extend(assignment.warnings.iter().cloned());
    report
}
