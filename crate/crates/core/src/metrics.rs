//! Evaluation metrics: ROUGE-L, multi-label micro-F1, per-level accuracy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure over whitespace tokens. Two empty texts score 1,
/// exactly one empty text scores 0.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    match (c.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / c.len() as f64;
    let rec = lcs / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// `2TP / (2TP + FP + FN)`; 1 when there was nothing to find and nothing
    /// was predicted.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Set-level confusion counts for one multi-label decision.
pub fn set_counts<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Counts {
    let tp = predicted.intersection(gold).count() as u64;
    Counts { tp, fp: predicted.len() as u64 - tp, fn_: gold.len() as u64 - tp }
}

pub fn micro_f1<T: Ord>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> f64 {
    let mut total = Counts::default();
    for (p, g) in pairs {
        total.add(set_counts(p, g));
    }
    total.f1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Counts,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_prompts: usize,
    pub micro_f1: f64,
    pub counts: Counts,
    /// Level (1 = top of the hierarchy) to accuracy.
    pub per_level_accuracy: BTreeMap<usize, f64>,
    pub rouge_l: Option<f64>,
    pub per_class: BTreeMap<String, ClassStats>,
    pub config_fingerprint: String,
}

/// Accumulates per-prompt decisions into an [`EvalReport`].
#[derive(Debug, Default)]
pub struct ReportBuilder {
    n: usize,
    total: Counts,
    per_class: BTreeMap<String, Counts>,
    level_hits: BTreeMap<usize, (u64, u64)>,
    rouge: Vec<f64>,
}

impl ReportBuilder {
    pub fn add_decision(&mut self, predicted: &BTreeSet<String>, gold: &BTreeSet<String>) {
        self.n += 1;
        self.total.add(set_counts(predicted, gold));
        for label in predicted.union(gold) {
            let c = self.per_class.entry(label.clone()).or_default();
            match (predicted.contains(label), gold.contains(label)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn add_level(&mut self, level: usize, correct: bool) {
        let e = self.level_hits.entry(level).or_default();
        e.0 += correct as u64;
        e.1 += 1;
    }

    pub fn add_rouge(&mut self, score: f64) {
        self.rouge.push(score);
    }

    pub fn finish(self, config_fingerprint: impl Into<String>) -> EvalReport {
        EvalReport {
            n_prompts: self.n,
            micro_f1: self.total.f1(),
            counts: self.total,
            per_level_accuracy: self.level_hits.into_iter().map(|(l, (h, n))| (l, h as f64 / n as f64)).collect(),
            rouge_l: (!self.rouge.is_empty()).then(|| self.rouge.iter().sum::<f64>() / self.rouge.len() as f64),
            per_class: self.per_class.into_iter().map(|(k, c)| (k, ClassStats { counts: c, f1: c.f1() })).collect(),
            config_fingerprint: config_fingerprint.into(),
        }
    }
}
