//! Parameter update rules for the training loop.

use crate::error::{FcmError, Result};
use crate::grad::Gradients;
use crate::matrix::Mat;

const RMSPROP_DECAY: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    RmsProp,
    Adam,
}

impl Optimizer {
    pub fn token(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::RmsProp => "rmsprop",
            Optimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "rmsprop" => Ok(Optimizer::RmsProp),
            "adam" => Ok(Optimizer::Adam),
            other => Err(FcmError::InvalidArg(format!(
                "unknown optimizer {other:?}, expected sgd, rmsprop or adam"
            ))),
        }
    }
}

/// Per-parameter accumulators; shapes conform to (W, b).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    // second moment / mean square
    vw: Mat,
    vb: Vec<f64>,
    // first moment (adam only)
    mw: Mat,
    mb: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, r: usize) -> Self {
        OptimizerState {
            kind,
            vw: Mat::zeros(r, r),
            vb: vec![0.0; r],
            mw: Mat::zeros(r, r),
            mb: vec![0.0; r],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update `theta <- theta - lr * direction(g)` in place.
    pub fn apply(&mut self, w: &mut Mat, b: &mut [f64], grads: &Gradients, lr: f64) -> Result<()> {
        if grads.dw.rows() != w.rows() || grads.dw.cols() != w.cols() || grads.db.len() != b.len() {
            return Err(FcmError::Shape("gradient shapes do not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(FcmError::Numerical("non-finite gradients".into()));
        }
        self.steps += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in w.data_mut().iter_mut().zip(grads.dw.data()) {
                    *p -= lr * g;
                }
                for (p, g) in b.iter_mut().zip(&grads.db) {
                    *p -= lr * g;
                }
            }
            Optimizer::RmsProp => {
                rmsprop(w.data_mut(), grads.dw.data(), self.vw.data_mut(), lr);
                rmsprop(b, &grads.db, &mut self.vb, lr);
            }
            Optimizer::Adam => {
                let t = self.steps as i32;
                adam(w.data_mut(), grads.dw.data(), self.mw.data_mut(), self.vw.data_mut(), lr, t);
                adam(b, &grads.db, &mut self.mb, &mut self.vb, lr, t);
            }
        }
        Ok(())
    }
}

fn rmsprop(theta: &mut [f64], g: &[f64], v: &mut [f64], lr: f64) {
    for ((p, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
        *vi = RMSPROP_DECAY * *vi + (1.0 - RMSPROP_DECAY) * gi * gi;
        *p -= lr * gi / (vi.sqrt() + EPS);
    }
}

fn adam(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, t: i32) {
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(dw: f64, db: f64) -> Gradients {
        Gradients {
            dw: Mat::filled(1, 1, dw),
            db: vec![db],
        }
    }

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut w = Mat::filled(1, 1, 1.0);
        let mut b = vec![1.0];
        let mut st = OptimizerState::new(Optimizer::Sgd, 1);
        st.apply(&mut w, &mut b, &grads(0.5, 0.5), 0.1).unwrap();
        assert!((w[(0, 0)] - 0.95).abs() < 1e-15);
        assert!((b[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        for g in [0.3, -0.02, 5.0] {
            let mut w = Mat::filled(1, 1, 1.0);
            let mut b = vec![0.0];
            let mut st = OptimizerState::new(Optimizer::Adam, 1);
            st.apply(&mut w, &mut b, &grads(g, 0.0), 0.01).unwrap();
            let expect = 1.0 - 0.01 * g.signum();
            assert!((w[(0, 0)] - expect).abs() < 1e-6, "g={g}: {}", w[(0, 0)]);
        }
    }

    #[test]
    fn rmsprop_update_magnitude_approaches_learning_rate() {
        // with constant g the mean square converges to g^2, so the step
        // magnitude converges to lr; iterate the recurrence
        let mut w = Mat::filled(1, 1, 0.0);
        let mut b = vec![0.0];
        let mut st = OptimizerState::new(Optimizer::RmsProp, 1);
        let lr = 0.05;
        let mut prev = w[(0, 0)];
        let mut last_step = 0.0;
        for _ in 0..500 {
            st.apply(&mut w, &mut b, &grads(0.7, 0.0), lr).unwrap();
            last_step = (w[(0, 0)] - prev).abs();
            prev = w[(0, 0)];
        }
        assert!((last_step - lr).abs() < lr * 1e-3, "step {last_step} vs lr {lr}");
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut w = Mat::filled(1, 1, 0.0);
        let mut b = vec![0.0];
        let mut st = OptimizerState::new(Optimizer::Sgd, 1);
        let bad = grads(f64::NAN, 0.0);
        assert!(matches!(
            st.apply(&mut w, &mut b, &bad, 0.1),
            Err(FcmError::Numerical(_))
        ));
    }

    #[test]
    fn optimizer_tokens_round_trip() {
        for opt in [Optimizer::Sgd, Optimizer::RmsProp, Optimizer::Adam] {
            assert_eq!(Optimizer::parse(opt.token()).unwrap(), opt);
        }
        assert!(Optimizer::parse("adamw").is_err());
    }
}
