//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use orchestrator_core::embedding::EmbeddingVector;
use orchestrator_core::ranker::{RatedCandidate, RatedGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = EmbeddingVector::normalized(v) {
            return e;
        }
    }
}

/// Group with `n` candidates whose ratings span exactly `levels` values.
pub fn random_group(rng: &mut ChaCha8Rng, dim: usize, n: usize, levels: usize) -> RatedGroup {
    let offset = rng.random_range(-3i64..=1);
    let mut ratings: Vec<i64> = (0..levels as i64).collect();
    while ratings.len() < n {
        ratings.push(rng.random_range(0..levels as i64));
    }
    for i in (1..ratings.len()).rev() {
        let j = rng.random_range(0..=i);
        ratings.swap(i, j);
    }
    RatedGroup {
        group_id: "g".into(),
        prompt_embedding: random_unit(rng, dim),
        candidates: ratings
            .into_iter()
            .enumerate()
            .map(|(i, r)| RatedCandidate { agent_id: format!("c{i}"), embedding: random_unit(rng, dim), rating: r + offset })
            .collect(),
    }
}

/// The weighted listwise loss evaluated term by term with plain
/// exponentials: each candidate d with shifted rating r > 0 contributes
/// −(2^r − 1)·log(e^{s_d} / (e^{s_d} + Σ_{r(d') < r} e^{s_d'})).
pub fn scalar_loss(scores: &[f64], ratings: &[i64]) -> f64 {
    let min = *ratings.iter().min().unwrap();
    let r: Vec<i64> = ratings.iter().map(|x| x - min).collect();
    let mut total = 0.0;
    for d in 0..scores.len() {
        let w = 2f64.powi(r[d] as i32) - 1.0;
        if w == 0.0 {
            continue;
        }
        let mut denom = scores[d].exp();
        for k in 0..scores.len() {
            if r[k] < r[d] {
                denom += scores[k].exp();
            }
        }
        total -= w * (scores[d].exp() / denom).ln();
    }
    total
}

/// Scores `⟨W q + b, e⟩` computed directly from row-major `w`.
pub fn direct_scores(w: &[f64], b: &[f64], group: &RatedGroup) -> Vec<f64> {
    let d = b.len();
    let q = group.prompt_embedding.as_slice();
    let u: Vec<f64> = (0..d).map(|i| (0..d).map(|j| w[i * d + j] * q[j]).sum::<f64>() + b[i]).collect();
    group.candidates.iter().map(|c| c.embedding.as_slice().iter().zip(&u).map(|(x, y)| x * y).sum()).collect()
}

pub fn group_ratings(group: &RatedGroup) -> Vec<i64> {
    group.candidates.iter().map(|c| c.rating).collect()
}

/// Length of the longest common subsequence by enumerating every
/// subsequence of the shorter sequence.
pub fn brute_lcs(a: &[&str], b: &[&str]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<&str> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| short[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = long.iter();
        if sub.iter().all(|t| it.any(|x| x == t)) {
            best = sub.len();
        }
    }
    best
}

pub fn brute_rouge_l(candidate: &str, reference: &str) -> f64 {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    match (c.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let l = brute_lcs(&c, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    2.0 * p * rec / (p + rec)
}

/// Micro-F1 by counting every (prompt, label) decision over the label
/// universe.
pub fn brute_micro_f1(pairs: &[(BTreeSet<String>, BTreeSet<String>)]) -> f64 {
    let universe: BTreeSet<&String> = pairs.iter().flat_map(|(p, g)| p.iter().chain(g)).collect();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (pred, gold) in pairs {
        for l in &universe {
            match (pred.contains(*l), gold.contains(*l)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Exhaustive greedy CART: at every node try every feature and every
/// midpoint between distinct values, partitioning by `x <= t`. Impurity is
/// kept as an exact fraction.
pub struct CartOracle {
    pub max_depth: usize,
    pub min_leaf: usize,
}

pub enum OracleNode {
    Leaf(String),
    Split(usize, f64, Box<OracleNode>, Box<OracleNode>),
}

fn label_counts(ys: &[&str]) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for y in ys {
        *m.entry(y.to_string()).or_insert(0) += 1;
    }
    m
}

fn majority_label(ys: &[&str]) -> String {
    let counts = label_counts(ys);
    let max = *counts.values().max().unwrap();
    counts.into_iter().find(|(_, c)| *c == max).unwrap().0
}

/// Weighted Gini impurity times n, as the fraction `n - Σ_side S/n_side`,
/// returned as (numerator, denominator) over n_l·n_r.
fn split_impurity(left: &[&str], right: &[&str]) -> (i128, i128) {
    let s = |ys: &[&str]| label_counts(ys).values().map(|c| (*c * *c) as i128).sum::<i128>();
    let (nl, nr) = (left.len() as i128, right.len() as i128);
    let n = nl + nr;
    (n * nl * nr - s(left) * nr - s(right) * nl, nl * nr)
}

impl CartOracle {
    pub fn fit(&self, x: &[Vec<f64>], y: &[&str]) -> OracleNode {
        let idx: Vec<usize> = (0..x.len()).collect();
        self.node(x, y, &idx, 0)
    }

    fn node(&self, x: &[Vec<f64>], y: &[&str], idx: &[usize], depth: usize) -> OracleNode {
        let ys: Vec<&str> = idx.iter().map(|&i| y[i]).collect();
        let leaf = OracleNode::Leaf(majority_label(&ys));
        if label_counts(&ys).len() <= 1 || depth >= self.max_depth {
            return leaf;
        }
        let n = idx.len() as i128;
        let parent_s: i128 = label_counts(&ys).values().map(|c| (*c * *c) as i128).sum();
        // Parent impurity·n = n − S/n = (n² − S)/n.
        let (pn, pd) = (n * n - parent_s, n);
        let mut best: Option<(usize, f64, i128, i128)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let l: Vec<&str> = idx.iter().filter(|&&i| x[i][f] <= t).map(|&i| y[i]).collect();
                let r: Vec<&str> = idx.iter().filter(|&&i| x[i][f] > t).map(|&i| y[i]).collect();
                if l.len() < self.min_leaf || r.len() < self.min_leaf {
                    continue;
                }
                let (num, den) = split_impurity(&l, &r);
                if best.is_none_or(|(_, _, bn, bd)| num * bd < bn * den) {
                    best = Some((f, t, num, den));
                }
            }
        }
        match best {
            Some((f, t, num, den)) if num * pd < pn * den => {
                let l: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] <= t).collect();
                let r: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] > t).collect();
                OracleNode::Split(f, t, Box::new(self.node(x, y, &l, depth + 1)), Box::new(self.node(x, y, &r, depth + 1)))
            }
            _ => leaf,
        }
    }
}

impl OracleNode {
    pub fn predict(&self, x: &[f64]) -> &str {
        match self {
            OracleNode::Leaf(l) => l,
            OracleNode::Split(f, t, l, r) => {
                if x[*f] <= *t {
                    l.predict(x)
                } else {
                    r.predict(x)
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            OracleNode::Leaf(_) => 1,
            OracleNode::Split(_, _, l, r) => l.leaves() + r.leaves(),
        }
    }
}

/// Longest-match, case-insensitive, word-bounded scan over `names`,
/// returning (name, first char, last char) in text order.
pub fn scan_matches(text: &str, names: &[&str]) -> Vec<(String, usize, usize)> {
    let t: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    assert_eq!(t.len(), text.chars().count(), "oracle handles length-preserving case folds only");
    let word = |c: char| c.is_alphanumeric();
    let mut out = Vec::new();
    let mut i = 0;
    while i < t.len() {
        let at_start = i == 0 || !word(t[i - 1]) || !word(t[i]);
        let mut best: Option<(&str, usize)> = None;
        if at_start {
            for name in names {
                let n: Vec<char> = name.chars().flat_map(char::to_lowercase).collect();
                let end = i + n.len();
                if end > t.len() || t[i..end] != n[..] {
                    continue;
                }
                let at_end = end == t.len() || !word(t[end]) || !word(t[end - 1]);
                if at_end && best.is_none_or(|(_, l)| n.len() > l) {
                    best = Some((name, n.len()));
                }
            }
        }
        match best {
            Some((name, len)) => {
                out.push((name.to_string(), i, i + len - 1));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}
