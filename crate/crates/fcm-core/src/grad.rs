//! Backpropagation through the shared-weight map, and the central
//! finite-difference gradient used to cross-check it.
//!
//! The map executed d times unrolls into d layers of equal size sharing one
//! (W, b); the per-layer gradients are accumulated into a single pair.

use crate::error::{FcmError, Result};
use crate::loss::{evaluate_loss, loss_output_gradient, LossKind};
use crate::matrix::Mat;
use crate::model::{activation_derivative, forward, FcmModel, Trajectory};

/// Gradient pair conformant with the model's (W, b).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Mat,
    pub db: Vec<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.dw.is_finite() && self.db.iter().all(|v| v.is_finite())
    }
}

/// Gradient of the batch cost with respect to (W, b), computed by walking the
/// trajectory backwards. The error signal starts at the loss gradient over
/// final pre-activations; at each earlier step the shared-weight
/// contributions `E * A^(t)^T` and the row sums of `E` are accumulated, and
/// `E` is pulled back through `W^T` and the activation derivative. The
/// derivative is always recovered from activation levels, so pre-activations
/// are never stored.
pub fn backprop(
    trajectory: &Trajectory,
    y: &[usize],
    kind: LossKind,
    model: &FcmModel,
) -> Result<Gradients> {
    let d = model.depth;
    let r = model.state_size();
    if trajectory.depth() != d {
        return Err(FcmError::Shape(format!(
            "trajectory has depth {}, model has depth {d}",
            trajectory.depth()
        )));
    }
    if trajectory.state(0).rows() != r {
        return Err(FcmError::Shape(format!(
            "trajectory states have {} rows, model needs {r}",
            trajectory.state(0).rows()
        )));
    }
    if trajectory.observations() != y.len() {
        return Err(FcmError::Shape(format!(
            "{} observations vs {} labels",
            trajectory.observations(),
            y.len()
        )));
    }

    let mut e = loss_output_gradient(trajectory.final_state(), y, kind, model)?;
    let mut dw = Mat::zeros(r, r);
    let mut db = vec![0.0; r];
    for t in (0..d).rev() {
        let a_t = trajectory.state(t);
        dw.add_assign(&e.matmul_transpose_rhs(a_t));
        for (acc, s) in db.iter_mut().zip(e.row_sums()) {
            *acc += s;
        }
        // A^(0) is an encoding, not an activation, and the error pulled
        // back past t=0 is never used, so the last pull-back is skipped
        if t > 0 {
            let mut back = model.w.transpose_matmul(&e);
            back.hadamard_assign(&activation_derivative(a_t, &model.activation));
            e = back;
        }
    }
    Ok(Gradients { dw, db })
}

/// Central-difference gradient of the batch cost over every entry of (W, b).
/// Independent of [`backprop`]: each parameter is perturbed and the cost is
/// re-evaluated through the ordinary forward pass.
pub fn finite_diff_gradient(
    x: &Mat,
    y: &[usize],
    kind: LossKind,
    model: &FcmModel,
    h: f64,
) -> Result<Gradients> {
    if !(h.is_finite() && h > 0.0) {
        return Err(FcmError::InvalidArg(format!("step size must be positive, got {h}")));
    }
    let r = model.state_size();
    let mut probe = model.clone();
    let cost = |probe: &FcmModel| -> Result<f64> {
        let traj = forward(x, probe)?;
        evaluate_loss(traj.final_state(), y, kind, probe)
    };
    let mut dw = Mat::zeros(r, r);
    let mut db = vec![0.0; r];
    for i in 0..r {
        for j in 0..r {
            let orig = probe.w[(i, j)];
            probe.w[(i, j)] = orig + h;
            let up = cost(&probe)?;
            probe.w[(i, j)] = orig - h;
            let down = cost(&probe)?;
            probe.w[(i, j)] = orig;
            dw[(i, j)] = (up - down) / (2.0 * h);
        }
        let orig = probe.b[i];
        probe.b[i] = orig + h;
        let up = cost(&probe)?;
        probe.b[i] = orig - h;
        let down = cost(&probe)?;
        probe.b[i] = orig;
        db[i] = (up - down) / (2.0 * h);
    }
    Ok(Gradients { dw, db })
}

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Largest relative gap between two gradient sets, with a 1e-6 floor on the
/// denominator so negligible gradients are compared absolutely.
pub fn max_relative_gap(a: &Gradients, b: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.dw.data().iter().zip(b.dw.data()) {
        worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-6));
    }
    for (x, y) in a.db.iter().zip(&b.db) {
        worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-6));
    }
    worst
}
