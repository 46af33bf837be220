//! Loss functions, softmax, and the output-layer loss gradient.

use crate::error::{FcmError, Result};
use crate::matrix::Mat;
use crate::model::{activation_derivative, FcmModel, Variant};

/// Predictions are clipped into [EPS, 1-EPS] inside the log loss; the raw
/// formula is undefined at the interval ends and sigmoid outputs can round
/// onto them.
pub const LOGLOSS_CLIP: f64 = 1e-12;

/// Which cost drives training: log loss for the binary head, cross-entropy
/// preceded by softmax for the one-hot head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    LogLoss,
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn for_variant(variant: Variant) -> LossKind {
        match variant {
            Variant::Binary => LossKind::LogLoss,
            Variant::MultiClass => LossKind::SoftmaxCrossEntropy,
        }
    }

    pub fn matches(&self, variant: Variant) -> bool {
        *self == LossKind::for_variant(variant)
    }
}

/// Column-wise softmax with per-column max subtraction (exact by shift
/// invariance, and overflow-safe).
pub fn softmax(y: &Mat) -> Mat {
    let mut out = Mat::zeros(y.rows(), y.cols());
    for j in 0..y.cols() {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..y.rows() {
            mx = mx.max(y[(i, j)]);
        }
        let mut sum = 0.0;
        for i in 0..y.rows() {
            let e = (y[(i, j)] - mx).exp();
            out[(i, j)] = e;
            sum += e;
        }
        for i in 0..y.rows() {
            out[(i, j)] /= sum;
        }
    }
    out
}

pub fn softmax_vec(y: &[f64]) -> Vec<f64> {
    softmax(&Mat::from_vec(y.len(), 1, y.to_vec())).data().to_vec()
}

fn check_lengths(pred_cols: usize, y: &[usize]) -> Result<()> {
    if pred_cols != y.len() {
        return Err(FcmError::Shape(format!(
            "{} predictions vs {} labels",
            pred_cols,
            y.len()
        )));
    }
    Ok(())
}

/// Mean binary log loss `-(1/m) sum[y log p + (1-y) log(1-p)]` over a 1 x m
/// prediction row; labels must be 0/1.
pub fn logloss(y_tilde: &Mat, y: &[usize]) -> Result<f64> {
    if y_tilde.rows() != 1 {
        return Err(FcmError::Shape(format!(
            "log loss expects a single prediction row, got {}",
            y_tilde.rows()
        )));
    }
    check_lengths(y_tilde.cols(), y)?;
    let m = y.len() as f64;
    let mut acc = 0.0;
    for (j, &label) in y.iter().enumerate() {
        if label > 1 {
            return Err(FcmError::InvalidArg(format!(
                "binary log loss got label {label} at observation {j}"
            )));
        }
        let p = y_tilde[(0, j)].clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
        acc += if label == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-acc / m)
}

/// Mean `-log softmax(y_tilde)[y]` over columns of a k x m prediction block.
pub fn softmax_cross_entropy(y_tilde: &Mat, y: &[usize]) -> Result<f64> {
    check_lengths(y_tilde.cols(), y)?;
    let k = y_tilde.rows();
    if !y_tilde.data().iter().all(|v| v.is_finite()) {
        return Err(FcmError::Numerical("non-finite predictions".into()));
    }
    let p = softmax(y_tilde);
    let m = y.len() as f64;
    let mut acc = 0.0;
    for (j, &label) in y.iter().enumerate() {
        if label >= k {
            return Err(FcmError::InvalidArg(format!(
                "label {label} out of range 0..{k} at observation {j}"
            )));
        }
        acc += p[(label, j)].max(f64::MIN_POSITIVE).ln();
    }
    Ok(-acc / m)
}

/// Cost of a final state under the model's loss.
pub fn evaluate_loss(final_state: &Mat, y: &[usize], kind: LossKind, model: &FcmModel) -> Result<f64> {
    if !kind.matches(model.variant) {
        return Err(FcmError::InvalidArg(
            "loss kind does not match the classifier head".into(),
        ));
    }
    let outputs = crate::model::extract(final_state, model);
    match kind {
        LossKind::LogLoss => logloss(&outputs, y),
        LossKind::SoftmaxCrossEntropy => softmax_cross_entropy(&outputs, y),
    }
}

/// Loss gradient with respect to the final pre-activations `H^(d)`: the
/// backpropagation seed. Input-concept rows are zero (no loss term reads
/// them); output rows chain the loss derivative through the sigmoid.
pub fn loss_output_gradient(
    final_state: &Mat,
    y: &[usize],
    kind: LossKind,
    model: &FcmModel,
) -> Result<Mat> {
    let r = model.state_size();
    if final_state.rows() != r {
        return Err(FcmError::Shape(format!(
            "final state must have {r} rows, got {}",
            final_state.rows()
        )));
    }
    check_lengths(final_state.cols(), y)?;
    if !kind.matches(model.variant) {
        return Err(FcmError::InvalidArg(
            "loss kind does not match the classifier head".into(),
        ));
    }
    let m = y.len() as f64;
    let mut e = Mat::zeros(r, final_state.cols());
    match kind {
        LossKind::LogLoss => {
            // d/dH of the mean log loss through the sigmoid collapses to
            // lambda * (y_tilde - y) / m on the single output row.
            let lambda = model.activation.lambda();
            let row = model.n;
            for (j, &label) in y.iter().enumerate() {
                if label > 1 {
                    return Err(FcmError::InvalidArg(format!(
                        "binary log loss got label {label} at observation {j}"
                    )));
                }
                let yt = final_state[(row, j)];
                e[(row, j)] = lambda * (yt - label as f64) / m;
            }
        }
        LossKind::SoftmaxCrossEntropy => {
            let outputs = crate::model::extract(final_state, model);
            let p = softmax(&outputs);
            let deriv = activation_derivative(&outputs, &model.activation);
            for (j, &label) in y.iter().enumerate() {
                if label >= model.k {
                    return Err(FcmError::InvalidArg(format!(
                        "label {label} out of range 0..{} at observation {j}",
                        model.k
                    )));
                }
                for c in 0..model.k {
                    let indicator = if c == label { 1.0 } else { 0.0 };
                    let da = (p[(c, j)] - indicator) / m;
                    // deriv already carries the lambda factor
                    e[(model.n + c, j)] = da * deriv[(c, j)];
                }
            }
        }
    }
    Ok(e)
}
