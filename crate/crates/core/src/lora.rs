//! Low-rank adapter arms over one shared, frozen base network.
//!
//! Each layer's effective weight under an arm is `W0 + (α/r)·B·A`. The base
//! is held once; arms only store their `A` and `B` factors, and any number
//! of arms can be evaluated in the same batch.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::linalg::Matrix;
use crate::ranker::TrainConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoraError {
    #[error("rank {rank} exceeds min(d_out, d_in) = {limit} at layer {layer}")]
    RankTooLarge { rank: usize, limit: usize, layer: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown arm {0}")]
    UnknownArm(String),
    #[error("arm {0} does not fit this base")]
    IncompatibleArm(String),
    #[error("fine-tuning dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid base: {0}")]
    InvalidBase(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLayer {
    #[serde(rename = "W0")]
    pub weight: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraBase {
    pub base_id: String,
    pub layers: Vec<BaseLayer>,
}

impl LoraBase {
    pub fn new(base_id: impl Into<String>, layers: Vec<BaseLayer>) -> Result<Self, LoraError> {
        let base = LoraBase { base_id: base_id.into(), layers };
        base.validate()?;
        Ok(base)
    }

    /// Base with seeded uniform(−1/√d_in, 1/√d_in) weights. `dims` lists the
    /// layer widths from input to output.
    pub fn random(base_id: impl Into<String>, dims: &[usize], activation: Activation, seed: u64) -> Result<Self, LoraError> {
        if dims.len() < 2 {
            return Err(LoraError::InvalidBase("need at least input and output widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect();
                BaseLayer { weight: Matrix { rows: w[1], cols: w[0], data }, activation }
            })
            .collect();
        LoraBase::new(base_id, layers)
    }

    pub fn validate(&self) -> Result<(), LoraError> {
        if self.layers.is_empty() {
            return Err(LoraError::InvalidBase("no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.rows != pair[1].weight.cols {
                return Err(LoraError::InvalidBase(format!("layer {} output does not feed layer {}", i, i + 1)));
            }
        }
        if !self.layers.iter().all(|l| l.weight.is_finite()) {
            return Err(LoraError::InvalidBase("non-finite weights".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("validated non-empty").weight.rows
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), LoraError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, LoraError> {
        let base: LoraBase = read_json(path)?;
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmLayer {
    /// `r × d_in`
    #[serde(rename = "A")]
    pub a: Matrix,
    /// `d_out × r`
    #[serde(rename = "B")]
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraArm {
    pub arm_id: String,
    pub rank: usize,
    pub alpha: f64,
    pub layers: Vec<ArmLayer>,
}

impl LoraArm {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.a.len() + l.b.len()).sum()
    }

    fn check_fits(&self, base: &LoraBase) -> Result<(), LoraError> {
        let ok = self.layers.len() == base.layers.len()
            && self.layers.iter().zip(&base.layers).all(|(al, bl)| {
                al.a.rows == self.rank
                    && al.b.cols == self.rank
                    && al.a.cols == bl.weight.cols
                    && al.b.rows == bl.weight.rows
            });
        if ok {
            Ok(())
        } else {
            Err(LoraError::IncompatibleArm(self.arm_id.clone()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), LoraError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, LoraError> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), LoraError> {
    let bytes = serde_json::to_vec(v).map_err(|e| LoraError::Checkpoint(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| LoraError::Checkpoint(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LoraError> {
    let bytes = std::fs::read(path).map_err(|e| LoraError::Checkpoint(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| LoraError::Checkpoint(e.to_string()))
}

/// New arm with seeded `A ~ U(−1/√d_in, 1/√d_in)` and `B = 0`, so it is a
/// no-op until trained. `alpha` defaults to `rank`.
pub fn create_arm(
    base: &LoraBase,
    arm_id: impl Into<String>,
    rank: usize,
    alpha: Option<f64>,
    seed: u64,
) -> Result<LoraArm, LoraError> {
    for (i, l) in base.layers.iter().enumerate() {
        let limit = l.weight.rows.min(l.weight.cols);
        if rank == 0 || rank > limit {
            return Err(LoraError::RankTooLarge { rank, limit, layer: i });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = base
        .layers
        .iter()
        .map(|l| {
            let d_in = l.weight.cols;
            let bound = 1.0 / (d_in as f64).sqrt();
            let data = (0..rank * d_in).map(|_| rng.random_range(-bound..bound)).collect();
            ArmLayer { a: Matrix { rows: rank, cols: d_in, data }, b: Matrix::zeros(l.weight.rows, rank) }
        })
        .collect();
    Ok(LoraArm { arm_id: arm_id.into(), rank, alpha: alpha.unwrap_or(rank as f64), layers })
}

/// Per-layer pre-activations and outputs, kept for backprop.
struct Trace {
    inputs: Vec<Vec<f64>>,
    low_rank: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn forward_trace(base: &LoraBase, arm: Option<&LoraArm>, x: &[f64]) -> Trace {
    let mut h = x.to_vec();
    let mut trace = Trace { inputs: Vec::new(), low_rank: Vec::new(), pre: Vec::new(), output: Vec::new() };
    for (i, layer) in base.layers.iter().enumerate() {
        let mut z = layer.weight.matvec(&h);
        let mut ah = Vec::new();
        if let Some(arm) = arm {
            let al = &arm.layers[i];
            ah = al.a.matvec(&h);
            let delta = al.b.matvec(&ah);
            let s = arm.scale();
            for (zi, di) in z.iter_mut().zip(&delta) {
                // Skipping exact zeros keeps an untrained arm bitwise equal to the base.
                if *di != 0.0 {
                    *zi += s * di;
                }
            }
        }
        let out: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
        trace.inputs.push(std::mem::replace(&mut h, out));
        trace.low_rank.push(ah);
        trace.pre.push(z);
    }
    trace.output = h;
    trace
}

pub fn forward(base: &LoraBase, arm: Option<&LoraArm>, x: &[f64]) -> Result<Vec<f64>, LoraError> {
    if x.len() != base.input_dim() {
        return Err(LoraError::DimensionMismatch { expected: base.input_dim(), got: x.len() });
    }
    if let Some(arm) = arm {
        arm.check_fits(base)?;
    }
    Ok(forward_trace(base, arm, x).output)
}

/// Rows of a mixed-arm inference batch: input plus the arm to apply, if any.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmBatch {
    pub rows: Vec<(Vec<f64>, Option<String>)>,
}

/// Evaluates each row under its own arm. Rows are independent.
pub fn multi_arm_forward(
    base: &LoraBase,
    arms: &BTreeMap<String, LoraArm>,
    batch: &ArmBatch,
    exec: Exec,
) -> Result<Vec<Vec<f64>>, LoraError> {
    for (x, arm_id) in &batch.rows {
        if x.len() != base.input_dim() {
            return Err(LoraError::DimensionMismatch { expected: base.input_dim(), got: x.len() });
        }
        if let Some(id) = arm_id {
            arms.get(id).ok_or_else(|| LoraError::UnknownArm(id.clone()))?.check_fits(base)?;
        }
    }
    Ok(exec.map(&batch.rows, |(x, arm_id)| {
        let arm = arm_id.as_ref().map(|id| &arms[id]);
        forward_trace(base, arm, x).output
    }))
}

/// Gradient of the squared error with respect to one arm's factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmGradient {
    pub loss: f64,
    pub layers: Vec<(Matrix, Matrix)>,
}

fn zero_grad(arm: &LoraArm) -> Vec<(Matrix, Matrix)> {
    arm.layers
        .iter()
        .map(|l| (Matrix::zeros(l.a.rows, l.a.cols), Matrix::zeros(l.b.rows, l.b.cols)))
        .collect()
}

/// Adds the gradient of `Σ (y − t)²` for one sample into `acc`; returns the
/// sample's summed squared error.
fn accumulate_sample(base: &LoraBase, arm: &LoraArm, x: &[f64], target: &[f64], acc: &mut [(Matrix, Matrix)]) -> f64 {
    let tr = forward_trace(base, Some(arm), x);
    let mut dh: Vec<f64> = tr.output.iter().zip(target).map(|(y, t)| 2.0 * (y - t)).collect();
    let sse: f64 = tr.output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum();
    let s = arm.scale();
    for i in (0..base.layers.len()).rev() {
        let layer = &base.layers[i];
        let al = &arm.layers[i];
        let dz: Vec<f64> = dh.iter().zip(&tr.pre[i]).map(|(g, z)| g * layer.activation.derivative(*z)).collect();
        let (ga, gb) = &mut acc[i];
        gb.add_outer(s, &dz, &tr.low_rank[i]);
        let bt_dz = al.b.matvec_transposed(&dz);
        ga.add_outer(s, &bt_dz, &tr.inputs[i]);
        if i > 0 {
            let mut prev = layer.weight.matvec_transposed(&dz);
            let through_a = al.a.matvec_transposed(&bt_dz);
            for (p, v) in prev.iter_mut().zip(&through_a) {
                *p += s * v;
            }
            dh = prev;
        }
    }
    sse
}

fn check_dataset(base: &LoraBase, dataset: &[(Vec<f64>, Vec<f64>)]) -> Result<(), LoraError> {
    if dataset.is_empty() {
        return Err(LoraError::EmptyDataset);
    }
    for (x, t) in dataset {
        if x.len() != base.input_dim() {
            return Err(LoraError::DimensionMismatch { expected: base.input_dim(), got: x.len() });
        }
        if t.len() != base.output_dim() {
            return Err(LoraError::DimensionMismatch { expected: base.output_dim(), got: t.len() });
        }
    }
    Ok(())
}

/// Mean squared error over all samples and outputs, and its gradient.
pub fn arm_gradient(base: &LoraBase, arm: &LoraArm, dataset: &[(Vec<f64>, Vec<f64>)]) -> Result<ArmGradient, LoraError> {
    arm.check_fits(base)?;
    check_dataset(base, dataset)?;
    let mut acc = zero_grad(arm);
    let mut sse = 0.0;
    for (x, t) in dataset {
        sse += accumulate_sample(base, arm, x, t, &mut acc);
    }
    let n = (dataset.len() * base.output_dim()) as f64;
    for (ga, gb) in &mut acc {
        ga.data.iter_mut().chain(gb.data.iter_mut()).for_each(|v| *v /= n);
    }
    Ok(ArmGradient { loss: sse / n, layers: acc })
}

pub fn mse(base: &LoraBase, arm: Option<&LoraArm>, dataset: &[(Vec<f64>, Vec<f64>)], exec: Exec) -> f64 {
    let sse: Vec<f64> = exec.map(dataset, |(x, t)| {
        forward_trace(base, arm, x).output.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum()
    });
    sse.iter().sum::<f64>() / (dataset.len() * base.output_dim()) as f64
}

const CHUNK: usize = 16;

/// Trains one arm by mini-batch gradient descent on mean squared error.
/// The base is borrowed immutably. Returns the trained arm and the loss
/// before training followed by the loss after each epoch.
pub fn finetune_arm(
    base: &LoraBase,
    arm: &LoraArm,
    dataset: &[(Vec<f64>, Vec<f64>)],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(LoraArm, Vec<f64>), LoraError> {
    cfg.validate().map_err(|e| LoraError::InvalidConfig(e.to_string()))?;
    arm.check_fits(base)?;
    check_dataset(base, dataset)?;
    let mut arm = arm.clone();
    let mut losses = vec![mse(base, Some(&arm), dataset, exec)];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let per_sample = base.output_dim() as f64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_groups) {
            let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
            let partials = exec.map(&chunks, |idx| {
                let mut acc = zero_grad(&arm);
                for &i in idx.iter() {
                    let (x, t) = &dataset[i];
                    accumulate_sample(base, &arm, x, t, &mut acc);
                }
                acc
            });
            let step = cfg.learning_rate / (batch.len() as f64 * per_sample);
            for partial in &partials {
                for (layer, (ga, gb)) in arm.layers.iter_mut().zip(partial) {
                    layer.a.axpy(-step, ga);
                    layer.b.axpy(-step, gb);
                }
            }
            if cfg.l2 > 0.0 {
                for layer in &mut arm.layers {
                    let decay = 1.0 - cfg.learning_rate * cfg.l2;
                    layer.a.data.iter_mut().chain(layer.b.data.iter_mut()).for_each(|v| *v *= decay);
                }
            }
        }
        let loss = mse(base, Some(&arm), dataset, exec);
        if !loss.is_finite() {
            return Err(LoraError::NonFiniteLoss(epoch));
        }
        losses.push(loss);
    }
    Ok((arm, losses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub base_params: usize,
    pub per_arm_params: Vec<(String, usize)>,
    /// One base plus every arm.
    pub total_shared: usize,
    /// One full base copy per arm, the cost of hosting each task separately.
    pub total_naive: usize,
    /// False with zero arms, where the naive figure carries no meaning.
    pub naive_defined: bool,
}

pub fn memory_report(base: &LoraBase, arms: &[&LoraArm]) -> MemoryReport {
    let base_params = base.param_count();
    let per_arm_params: Vec<(String, usize)> = arms
        .iter()
        .map(|a| {
            let count = a
                .layers
                .iter()
                .map(|l| a.rank * (l.a.cols + l.b.rows))
                .sum();
            (a.arm_id.clone(), count)
        })
        .collect();
    MemoryReport {
        base_params,
        total_shared: base_params + per_arm_params.iter().map(|(_, c)| c).sum::<usize>(),
        total_naive: arms.len() * base_params,
        naive_defined: !arms.is_empty(),
        per_arm_params,
    }
}

/// A base with any number of named arms resident at once.
#[derive(Debug, Clone)]
pub struct ArmHost {
    pub base: LoraBase,
    arms: BTreeMap<String, LoraArm>,
}

impl ArmHost {
    pub fn new(base: LoraBase) -> Self {
        ArmHost { base, arms: BTreeMap::new() }
    }

    pub fn insert(&mut self, arm: LoraArm) -> Result<Option<LoraArm>, LoraError> {
        arm.check_fits(&self.base)?;
        Ok(self.arms.insert(arm.arm_id.clone(), arm))
    }

    pub fn remove(&mut self, arm_id: &str) -> Option<LoraArm> {
        self.arms.remove(arm_id)
    }

    pub fn arm(&self, arm_id: &str) -> Option<&LoraArm> {
        self.arms.get(arm_id)
    }

    pub fn arms(&self) -> &BTreeMap<String, LoraArm> {
        &self.arms
    }

    pub fn forward(&self, arm_id: Option<&str>, x: &[f64]) -> Result<Vec<f64>, LoraError> {
        let arm = arm_id
            .map(|id| self.arms.get(id).ok_or_else(|| LoraError::UnknownArm(id.to_string())))
            .transpose()?;
        forward(&self.base, arm, x)
    }

    pub fn run_batch(&self, batch: &ArmBatch, exec: Exec) -> Result<Vec<Vec<f64>>, LoraError> {
        multi_arm_forward(&self.base, &self.arms, batch, exec)
    }

    /// Fine-tunes one resident arm in place; other arms are not touched.
    pub fn finetune(&mut self, arm_id: &str, dataset: &[(Vec<f64>, Vec<f64>)], cfg: &TrainConfig, exec: Exec) -> Result<Vec<f64>, LoraError> {
        let arm = self.arms.get(arm_id).ok_or_else(|| LoraError::UnknownArm(arm_id.to_string()))?;
        let (trained, losses) = finetune_arm(&self.base, arm, dataset, cfg, exec)?;
        self.arms.insert(arm_id.to_string(), trained);
        Ok(losses)
    }

    pub fn memory_report(&self) -> MemoryReport {
        let arms: Vec<&LoraArm> = self.arms.values().collect();
        memory_report(&self.base, &arms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base4() -> LoraBase {
        LoraBase::random("b", &[4, 4], Activation::Identity, 1).unwrap()
    }

    #[test]
    fn fresh_arm_is_a_no_op() {
        let base = LoraBase::random("b", &[5, 6, 3], Activation::Relu, 3).unwrap();
        let arm = create_arm(&base, "a", 2, None, 9).unwrap();
        let x = [0.3, -1.2, 0.5, 2.0, -0.1];
        let with = forward(&base, Some(&arm), &x).unwrap();
        let without = forward(&base, None, &x).unwrap();
        assert_eq!(
            with.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            without.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn same_seed_same_factors() {
        let base = base4();
        assert_eq!(create_arm(&base, "a", 2, None, 5).unwrap(), create_arm(&base, "a", 2, None, 5).unwrap());
        assert_ne!(create_arm(&base, "a", 2, None, 5).unwrap(), create_arm(&base, "a", 2, None, 6).unwrap());
    }

    #[test]
    fn rank_bounds() {
        let base = LoraBase::random("b", &[4, 3], Activation::Identity, 1).unwrap();
        assert!(matches!(create_arm(&base, "a", 4, None, 0), Err(LoraError::RankTooLarge { limit: 3, .. })));
        assert!(create_arm(&base, "a", 3, None, 0).is_ok());
    }

    #[test]
    fn identity_through_ba() {
        // W0 = 0, B·A = I, α = r: the layer reduces to the identity map.
        let base = LoraBase::new(
            "zero",
            vec![BaseLayer { weight: Matrix::zeros(3, 3), activation: Activation::Identity }],
        )
        .unwrap();
        let arm = LoraArm {
            arm_id: "id".into(),
            rank: 3,
            alpha: 3.0,
            layers: vec![ArmLayer { a: Matrix::identity(3), b: Matrix::identity(3) }],
        };
        assert_eq!(forward(&base, Some(&arm), &[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn forward_checks_input_width() {
        let base = base4();
        assert_eq!(forward(&base, None, &[1.0]), Err(LoraError::DimensionMismatch { expected: 4, got: 1 }));
    }

    #[test]
    fn batch_errors_and_empty() {
        let base = base4();
        let arms = BTreeMap::new();
        assert!(multi_arm_forward(&base, &arms, &ArmBatch::default(), Exec::Parallel).unwrap().is_empty());
        let batch = ArmBatch { rows: vec![(vec![0.0; 4], Some("ghost".into()))] };
        assert_eq!(multi_arm_forward(&base, &arms, &batch, Exec::Parallel), Err(LoraError::UnknownArm("ghost".into())));
    }

    #[test]
    fn memory_report_counts() {
        let base = base4();
        let arms: Vec<LoraArm> = (0..3).map(|i| create_arm(&base, format!("a{i}"), 1, None, i).unwrap()).collect();
        let refs: Vec<&LoraArm> = arms.iter().collect();
        let r = memory_report(&base, &refs);
        assert_eq!((r.base_params, r.per_arm_params[0].1, r.total_shared, r.total_naive), (16, 8, 40, 48));

        let r = memory_report(&base, &[]);
        assert_eq!((r.total_shared, r.total_naive, r.naive_defined), (16, 0, false));

        let big = LoraBase::random("big", &[64, 64], Activation::Identity, 0).unwrap();
        let arms: Vec<LoraArm> = (0..5).map(|i| create_arm(&big, format!("a{i}"), 4, None, i).unwrap()).collect();
        let refs: Vec<&LoraArm> = arms.iter().collect();
        let r = memory_report(&big, &refs);
        assert_eq!((r.total_shared, r.total_naive), (6656, 20480));
        assert_eq!(r.per_arm_params[0].1, arms[0].param_count());
    }

    #[test]
    fn zero_epochs_leave_arm_unchanged() {
        let base = base4();
        let arm = create_arm(&base, "a", 1, None, 0).unwrap();
        let data = vec![(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4])];
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (trained, losses) = finetune_arm(&base, &arm, &data, &cfg, Exec::Sequential).unwrap();
        assert_eq!(trained, arm);
        assert_eq!(losses.len(), 1);
        assert_eq!(finetune_arm(&base, &arm, &[], &cfg, Exec::Sequential), Err(LoraError::EmptyDataset));
    }

    #[test]
    fn checkpoints_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = LoraBase::random("b", &[3, 4, 2], Activation::Relu, 11).unwrap();
        let arm = create_arm(&base, "a", 2, Some(4.0), 1).unwrap();
        base.save(&dir.path().join("base.json")).unwrap();
        arm.save(&dir.path().join("arm.json")).unwrap();
        assert_eq!(LoraBase::load(&dir.path().join("base.json")).unwrap(), base);
        assert_eq!(LoraArm::load(&dir.path().join("arm.json")).unwrap(), arm);
        let text = std::fs::read_to_string(dir.path().join("arm.json")).unwrap();
        assert!(text.contains("\"A\"") && text.contains("\"B\""));
    }
}
