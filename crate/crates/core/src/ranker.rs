//! Graded-relevance listwise ranking.
//!
//! Each candidate `d` of a prompt competes against every candidate with a
//! strictly lower rating:
//!
//! ```text
//! P(d) = exp(f(d)) / (exp(f(d)) + Σ_{d' : r(d') < r(d)} exp(f(d')))
//! L    = −Σ_d (2^{r(d)} − 1) · log P(d)
//! ```
//!
//! Ratings are shifted per group so the lowest level is 0 (weight 0). The
//! score is a bilinear head over frozen embeddings,
//! `f(d) = ⟨W·q + b, e(d)⟩`, and only `(W, b)` are trained.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::exec::Exec;
use crate::linalg::{dot, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {scores} scores vs {ratings} ratings")]
    LengthMismatch { scores: usize, ratings: usize },
    #[error("no group has two or more distinct rating levels")]
    NoTrainableGroups,
    #[error("loss became non-finite at epoch {epoch} (last finite mean loss {last_finite})")]
    NonFiniteLoss { epoch: usize, last_finite: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedCandidate {
    pub agent_id: String,
    pub embedding: EmbeddingVector,
    pub rating: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedGroup {
    pub group_id: String,
    pub prompt_embedding: EmbeddingVector,
    pub candidates: Vec<RatedCandidate>,
}

impl RatedGroup {
    pub fn ratings(&self) -> Vec<i64> {
        self.candidates.iter().map(|c| c.rating).collect()
    }

    /// A group with a single rating level has constant zero loss.
    pub fn is_trainable(&self) -> bool {
        let mut it = self.candidates.iter().map(|c| c.rating);
        match it.next() {
            Some(first) => it.any(|r| r != first),
            None => false,
        }
    }

    fn check_dims(&self, dim: usize) -> Result<(), RankError> {
        let check = |got: usize| {
            if got == dim {
                Ok(())
            } else {
                Err(RankError::DimensionMismatch { expected: dim, got })
            }
        };
        check(self.prompt_embedding.dim())?;
        self.candidates.iter().try_for_each(|c| check(c.embedding.dim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_groups: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.5, epochs: 50, batch_groups: 32, seed: 7, l2: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RankError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(RankError::InvalidConfig(format!("learning_rate {} not in (0, 1]", self.learning_rate)));
        }
        if self.epochs > 10_000 {
            return Err(RankError::InvalidConfig(format!("epochs {} > 10000", self.epochs)));
        }
        if self.batch_groups == 0 {
            return Err(RankError::InvalidConfig("batch_groups must be positive".into()));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(RankError::InvalidConfig(format!("l2 {} is negative", self.l2)));
        }
        Ok(())
    }
}

/// Trainable scoring head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub version: u64,
    pub dimension: usize,
    #[serde(rename = "W")]
    pub weight: Vec<f64>,
    pub b: Vec<f64>,
    pub trained_on: String,
    pub final_loss: Option<f64>,
}

impl RankerModel {
    /// Identity projection and zero bias: scores reduce to cosine similarity.
    pub fn identity(dimension: usize) -> Self {
        RankerModel {
            version: 0,
            dimension,
            weight: Matrix::identity(dimension).data,
            b: vec![0.0; dimension],
            trained_on: String::new(),
            final_loss: None,
        }
    }

    pub fn weight_matrix(&self) -> Matrix {
        Matrix { rows: self.dimension, cols: self.dimension, data: self.weight.clone() }
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<(), RankError> {
        if v.dim() == self.dimension {
            Ok(())
        } else {
            Err(RankError::DimensionMismatch { expected: self.dimension, got: v.dim() })
        }
    }

    /// `W·q + b`.
    pub fn project(&self, prompt: &EmbeddingVector) -> Result<Vec<f64>, RankError> {
        self.check_dim(prompt)?;
        let q = prompt.as_slice();
        let d = self.dimension;
        Ok((0..d).map(|r| dot(&self.weight[r * d..(r + 1) * d], q) + self.b[r]).collect())
    }

    /// `f(d) = ⟨W·q + b, e(d)⟩` for every candidate.
    pub fn score(&self, prompt: &EmbeddingVector, candidates: &[&EmbeddingVector]) -> Result<Vec<f64>, RankError> {
        let u = self.project(prompt)?;
        candidates
            .iter()
            .map(|c| {
                self.check_dim(c)?;
                Ok(dot(&u, c.as_slice()))
            })
            .collect()
    }

    /// Candidates sorted by descending score, ties by ascending id.
    pub fn rank(
        &self,
        prompt: &EmbeddingVector,
        candidates: &[(&str, &EmbeddingVector)],
    ) -> Result<Vec<(String, f64)>, RankError> {
        if candidates.is_empty() {
            return Err(RankError::NoCandidates);
        }
        let embs: Vec<&EmbeddingVector> = candidates.iter().map(|(_, e)| *e).collect();
        let scores = self.score(prompt, &embs)?;
        let mut ranked: Vec<(String, f64)> =
            candidates.iter().zip(scores).map(|((id, _), s)| (id.to_string(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ranked)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.b).all(|v| v.is_finite())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, RankError> {
        let text = std::fs::read(path).map_err(|e| RankError::Checkpoint(e.to_string()))?;
        let m: RankerModel = serde_json::from_slice(&text).map_err(|e| RankError::Checkpoint(e.to_string()))?;
        if m.weight.len() != m.dimension * m.dimension || m.b.len() != m.dimension {
            return Err(RankError::Checkpoint("parameter shapes do not match dimension".into()));
        }
        if !m.is_finite() {
            return Err(RankError::Checkpoint("non-finite parameters".into()));
        }
        Ok(m)
    }
}

/// Shifts ratings so the minimum becomes 0. Order and ties are preserved.
pub fn shift_ratings(ratings: &[i64]) -> Vec<u64> {
    let min = ratings.iter().copied().min().unwrap_or(0);
    ratings.iter().map(|&r| (r - min) as u64).collect()
}

fn level_weight(shifted: u64) -> f64 {
    2f64.powi(shifted as i32) - 1.0
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Weighted listwise loss of one group and its gradient with respect to the
/// scores.
pub fn loss_and_score_grad(scores: &[f64], ratings: &[i64]) -> Result<(f64, Vec<f64>), RankError> {
    if scores.len() != ratings.len() {
        return Err(RankError::LengthMismatch { scores: scores.len(), ratings: ratings.len() });
    }
    let shifted = shift_ratings(ratings);
    let n = scores.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut members: Vec<usize> = Vec::with_capacity(n);
    for d in 0..n {
        let w = level_weight(shifted[d]);
        if w == 0.0 {
            continue;
        }
        members.clear();
        members.push(d);
        members.extend((0..n).filter(|&j| shifted[j] < shifted[d]));
        let lse = logsumexp(members.iter().map(|&j| scores[j]));
        loss += w * (lse - scores[d]);
        grad[d] -= w;
        for &j in &members {
            grad[j] += w * (scores[j] - lse).exp();
        }
    }
    Ok((loss, grad))
}

pub fn group_loss(scores: &[f64], ratings: &[i64]) -> Result<f64, RankError> {
    loss_and_score_grad(scores, ratings).map(|(l, _)| l)
}

/// Gradient of a group's loss with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub weight: Matrix,
    pub b: Vec<f64>,
}

/// Returns `(loss, ∂L/∂u)` where `u = W·q + b`; the parameter gradient is
/// `∂L/∂W = (∂L/∂u) qᵀ` and `∂L/∂b = ∂L/∂u`.
fn group_loss_and_projection_grad(model: &RankerModel, group: &RatedGroup) -> Result<(f64, Vec<f64>), RankError> {
    let u = model.project(&group.prompt_embedding)?;
    let scores: Vec<f64> = group.candidates.iter().map(|c| dot(&u, c.embedding.as_slice())).collect();
    let (loss, g) = loss_and_score_grad(&scores, &group.ratings())?;
    let mut gu = vec![0.0; model.dimension];
    for (c, gs) in group.candidates.iter().zip(&g) {
        if *gs == 0.0 {
            continue;
        }
        for (acc, e) in gu.iter_mut().zip(c.embedding.as_slice()) {
            *acc += gs * e;
        }
    }
    Ok((loss, gu))
}

pub fn group_grad(model: &RankerModel, group: &RatedGroup) -> Result<Gradient, RankError> {
    group.check_dims(model.dimension)?;
    let (loss, gu) = group_loss_and_projection_grad(model, group)?;
    let mut weight = Matrix::zeros(model.dimension, model.dimension);
    weight.add_outer(1.0, &gu, group.prompt_embedding.as_slice());
    Ok(Gradient { loss, weight, b: gu })
}

/// Mean loss over `groups`.
pub fn mean_loss(model: &RankerModel, groups: &[RatedGroup], exec: Exec) -> Result<f64, RankError> {
    if groups.is_empty() {
        return Ok(0.0);
    }
    let losses = exec.try_map(groups, |_, g| {
        let u = model.project(&g.prompt_embedding)?;
        let scores: Vec<f64> = g.candidates.iter().map(|c| dot(&u, c.embedding.as_slice())).collect();
        group_loss(&scores, &g.ratings())
    })?;
    Ok(losses.iter().sum::<f64>() / groups.len() as f64)
}

/// Content fingerprint of a training set.
pub fn fingerprint(groups: &[RatedGroup]) -> String {
    let mut h = Sha256::new();
    for g in groups {
        h.update(g.group_id.as_bytes());
        for v in g.prompt_embedding.as_slice() {
            h.update(v.to_le_bytes());
        }
        for c in &g.candidates {
            h.update(c.agent_id.as_bytes());
            h.update(c.rating.to_le_bytes());
            for v in c.embedding.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Groups per gradient-accumulation chunk. Fixed so that the summation order,
/// and hence the result, does not depend on the thread count.
const CHUNK: usize = 8;

pub fn train(groups: &[RatedGroup], cfg: &TrainConfig) -> Result<RankerModel, RankError> {
    train_with(groups, cfg, Exec::default())
}

/// Mini-batch gradient descent from the identity head. Returns the parameters
/// with the lowest mean training loss seen at an epoch boundary, so the result
/// is never worse than the initialization.
pub fn train_with(groups: &[RatedGroup], cfg: &TrainConfig, exec: Exec) -> Result<RankerModel, RankError> {
    cfg.validate()?;
    let dim = groups
        .first()
        .map(|g| g.prompt_embedding.dim())
        .ok_or(RankError::NoTrainableGroups)?;
    for g in groups {
        g.check_dims(dim)?;
    }
    let trainable: Vec<&RatedGroup> = groups.iter().filter(|g| g.is_trainable()).collect();
    if trainable.is_empty() {
        return Err(RankError::NoTrainableGroups);
    }

    let mut model = RankerModel::identity(dim);
    model.trained_on = fingerprint(groups);
    let owned: Vec<RatedGroup> = trainable.iter().map(|g| (*g).clone()).collect();
    let initial = mean_loss(&model, &owned, exec)?;
    if !initial.is_finite() {
        return Err(RankError::NonFiniteLoss { epoch: 0, last_finite: f64::NAN });
    }
    let mut best = (initial, model.weight.clone(), model.b.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..owned.len()).collect();
    let identity = Matrix::identity(dim);
    let mut last_finite = initial;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_groups) {
            let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
            let partials = exec.try_map(&chunks, |_, idx| {
                let mut gw = Matrix::zeros(dim, dim);
                let mut gb = vec![0.0; dim];
                for &i in idx.iter() {
                    let g = &owned[i];
                    let (_, gu) = group_loss_and_projection_grad(&model, g)?;
                    gw.add_outer(1.0, &gu, g.prompt_embedding.as_slice());
                    for (a, v) in gb.iter_mut().zip(&gu) {
                        *a += v;
                    }
                }
                Ok::<_, RankError>((gw, gb))
            })?;
            let scale = cfg.learning_rate / batch.len() as f64;
            let mut w = Matrix { rows: dim, cols: dim, data: std::mem::take(&mut model.weight) };
            if cfg.l2 > 0.0 {
                // Decay toward the identity start point.
                let mut delta = w.clone();
                delta.axpy(-1.0, &identity);
                w.axpy(-cfg.learning_rate * cfg.l2, &delta);
                for b in &mut model.b {
                    *b -= cfg.learning_rate * cfg.l2 * *b;
                }
            }
            for (gw, gb) in &partials {
                w.axpy(-scale, gw);
                for (b, g) in model.b.iter_mut().zip(gb) {
                    *b -= scale * g;
                }
            }
            model.weight = w.data;
        }
        let loss = mean_loss(&model, &owned, exec)?;
        if !loss.is_finite() || !model.is_finite() {
            return Err(RankError::NonFiniteLoss { epoch, last_finite });
        }
        last_finite = loss;
        log::debug!("ranker epoch {epoch}: mean loss {loss:.6}");
        if loss < best.0 {
            best = (loss, model.weight.clone(), model.b.clone());
        }
    }

    model.weight = best.1;
    model.b = best.2;
    model.final_loss = Some(best.0);
    model.version = 1;
    Ok(model)
}
