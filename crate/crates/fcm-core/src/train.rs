//! Batched gradient training of the map classifier.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{FcmError, Result};
use crate::grad::backprop;
use crate::loss::{evaluate_loss, LossKind};
use crate::matrix::Mat;
use crate::model::{forward, ActivationConfig, FcmModel, Variant};
use crate::optim::{Optimizer, OptimizerState};

/// Batch size: a fixed size, or the whole dataset per update (the table
/// notation for this is -1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl BatchSize {
    pub fn parse(s: &str) -> Result<Self> {
        match s.parse::<i64>() {
            Ok(-1) => Ok(BatchSize::Full),
            Ok(v) if v >= 1 => Ok(BatchSize::Size(v as usize)),
            _ => Err(FcmError::InvalidArg(format!(
                "batch size must be a positive integer or -1, got {s:?}"
            ))),
        }
    }

    pub fn token(&self) -> String {
        match self {
            BatchSize::Full => "-1".into(),
            BatchSize::Size(v) => v.to_string(),
        }
    }

    fn effective(&self, m: usize) -> usize {
        match self {
            BatchSize::Full => m,
            BatchSize::Size(v) => *v,
        }
    }
}

/// Hyperparameters of one training run; mirrors one row of the usual
/// configuration table.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: Variant,
    pub depth: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(FcmError::InvalidArg("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FcmError::InvalidArg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.depth == 0 {
            return Err(FcmError::InvalidArg("depth must be at least 1".into()));
        }
        ActivationConfig::new(self.lambda).map(|_| ())
    }
}

/// Fresh (W, b) from a seeded generator: W i.i.d. uniform on [-1, 1], and
/// each bias set to `0.5 - 0.5 * sum(W_i)` plus uniform jitter on
/// [-0.1, 0.1]. With states starting near 0.5, that bias puts the initial
/// pre-activations at the sigmoid's fixed point, where the derivative peaks;
/// biases drawn independently of the rows leave a large share of runs
/// saturated from the start, and their gradients die.
pub fn init_weights(n: usize, k: usize, variant: Variant, seed: u64) -> (Mat, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_weights(n, k, variant, &mut rng)
}

fn draw_weights(n: usize, k: usize, variant: Variant, rng: &mut ChaCha8Rng) -> (Mat, Vec<f64>) {
    let r = variant.state_size(n, k);
    let w = Mat::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    let b = (0..r)
        .map(|i| 0.5 - 0.5 * w.row(i).iter().sum::<f64>() + rng.random_range(-0.1..0.1))
        .collect();
    (w, b)
}

/// A fresh shuffle split into exactly `floor(m / bs)` batches of size `bs`;
/// the remainder observations sit this epoch out and re-enter the next
/// shuffle.
pub fn make_batches(m: usize, bs: BatchSize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let size = bs.effective(m);
    if size > m || size == 0 {
        return Err(FcmError::InvalidArg(format!(
            "batch size {size} exceeds the {m} available observations"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    Ok(idx.chunks_exact(size).map(|c| c.to_vec()).collect())
}

/// Trains a classifier on a scaled dataset: `epochs x floor(m/bs)` iterations
/// of forward pass, backpropagation and one optimizer update, recording each
/// batch loss. No early stopping. The returned history has exactly that
/// length, and the run is fully determined by (seed, config, data).
pub fn fit(dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<(FcmModel, Vec<f64>)> {
    cfg.validate()?;
    let k = dataset.label_names.len();
    let n = dataset.x.rows();
    let m = dataset.x.cols();
    if cfg.variant == Variant::Binary && k != 2 {
        return Err(FcmError::InvalidArg(format!(
            "FCMB is restricted to binary problems, dataset has {k} classes"
        )));
    }
    let kind = LossKind::for_variant(cfg.variant);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, b) = draw_weights(n, k, cfg.variant, &mut rng);
    let mut model = FcmModel::new(
        cfg.variant,
        n,
        k,
        w,
        b,
        cfg.depth,
        ActivationConfig::new(cfg.lambda)?,
        dataset.label_names.clone(),
        dataset.scaler.clone(),
    )?;

    let mut opt = OptimizerState::new(cfg.optimizer, model.state_size());
    let mut history = Vec::with_capacity(cfg.epochs * (m / cfg.batch_size.effective(m)));
    for epoch in 0..cfg.epochs {
        let batches = make_batches(m, cfg.batch_size, &mut rng)?;
        for (batch_no, batch) in batches.iter().enumerate() {
            let diag = |msg: String| {
                FcmError::Numerical(format!("epoch {epoch}, batch {batch_no}: {msg}"))
            };
            let xb = dataset.x.gather_cols(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| dataset.y[i]).collect();
            let traj = forward(&xb, &model).map_err(|e| diag(e.to_string()))?;
            let loss = evaluate_loss(traj.final_state(), &yb, kind, &model)?;
            if !loss.is_finite() {
                return Err(diag(format!("loss became {loss}")));
            }
            history.push(loss);
            let grads = backprop(&traj, &yb, kind, &model)?;
            opt.apply(&mut model.w, &mut model.b, &grads, cfg.learning_rate)
                .map_err(|e| diag(e.to_string()))?;
        }
    }
    Ok((model, history))
}
