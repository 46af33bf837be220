//! FCM data types and forward semantics: activation, encoding, state stepping,
//! depth-d execution, output extraction, and weight normalization.

use crate::data::MinMaxScaler;
use crate::error::{FcmError, Result};
use crate::matrix::Mat;

/// Exponent arguments are clamped here so `exp` never overflows.
const EXP_ARG_LIMIT: f64 = 500.0;

/// Slope of the shifted sigmoid `1 / (1 + exp(-lambda * (x - 0.5)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationConfig {
    lambda: f64,
}

impl ActivationConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(FcmError::InvalidArg(format!(
                "lambda must be a positive finite real, got {lambda}"
            )));
        }
        Ok(ActivationConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Classifier head: one output concept with a 0.5 threshold, or one-hot
/// output concepts read out by argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Binary,
    MultiClass,
}

impl Variant {
    /// Table-style token (`FCMB` / `FCMMC`) used in config and model files.
    pub fn token(&self) -> &'static str {
        match self {
            Variant::Binary => "FCMB",
            Variant::MultiClass => "FCMMC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "FCMB" => Ok(Variant::Binary),
            "FCMMC" => Ok(Variant::MultiClass),
            other => Err(FcmError::InvalidArg(format!(
                "unknown classifier variant {other:?}, expected FCMB or FCMMC"
            ))),
        }
    }

    /// State size for `n` input concepts and `k` classes.
    pub fn state_size(&self, n: usize, k: usize) -> usize {
        match self {
            Variant::Binary => n + 1,
            Variant::MultiClass => n + k,
        }
    }
}

/// A trained (or in-training) fuzzy cognitive map classifier.
///
/// The state vector stacks `n` input concepts over `r - n` output concepts;
/// `w` is the full `r x r` connection matrix and `b` the per-concept bias.
#[derive(Debug, Clone)]
pub struct FcmModel {
    pub variant: Variant,
    pub n: usize,
    pub k: usize,
    pub w: Mat,
    pub b: Vec<f64>,
    pub depth: usize,
    pub activation: ActivationConfig,
    pub class_labels: Vec<String>,
    pub scaler: MinMaxScaler,
}

impl FcmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        n: usize,
        k: usize,
        w: Mat,
        b: Vec<f64>,
        depth: usize,
        activation: ActivationConfig,
        class_labels: Vec<String>,
        scaler: MinMaxScaler,
    ) -> Result<Self> {
        if n == 0 {
            return Err(FcmError::InvalidArg("model needs at least one input concept".into()));
        }
        if k < 2 {
            return Err(FcmError::InvalidArg(format!("need at least 2 classes, got {k}")));
        }
        if variant == Variant::Binary && k != 2 {
            return Err(FcmError::InvalidArg(format!(
                "FCMB is restricted to binary problems, got k={k}"
            )));
        }
        if depth == 0 {
            return Err(FcmError::InvalidArg(
                "depth must be at least 1: the classifier always performs a step".into(),
            ));
        }
        let r = variant.state_size(n, k);
        if w.rows() != r || w.cols() != r {
            return Err(FcmError::Shape(format!(
                "weight matrix must be {r}x{r}, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        if b.len() != r {
            return Err(FcmError::Shape(format!(
                "bias must have length {r}, got {}",
                b.len()
            )));
        }
        if !w.is_finite() || !b.iter().all(|v| v.is_finite()) {
            return Err(FcmError::Numerical("weights contain non-finite values".into()));
        }
        if class_labels.len() != k {
            return Err(FcmError::InvalidArg(format!(
                "expected {k} class labels, got {}",
                class_labels.len()
            )));
        }
        if scaler.len() != n {
            return Err(FcmError::Shape(format!(
                "scaler covers {} features, model has n={n}",
                scaler.len()
            )));
        }
        Ok(FcmModel {
            variant,
            n,
            k,
            w,
            b,
            depth,
            activation,
            class_labels,
            scaler,
        })
    }

    /// State vector size `r` (`n + 1` for the binary head, `n + k` otherwise).
    pub fn state_size(&self) -> usize {
        self.variant.state_size(self.n, self.k)
    }

    /// Number of output concepts (`r - n`).
    pub fn output_size(&self) -> usize {
        self.state_size() - self.n
    }
}

/// Sequence of the d+1 state matrices produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Trajectory {
    states: Vec<Mat>,
}

impl Trajectory {
    pub fn states(&self) -> &[Mat] {
        &self.states
    }

    pub fn depth(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, t: usize) -> &Mat {
        &self.states[t]
    }

    pub fn final_state(&self) -> &Mat {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn observations(&self) -> usize {
        self.states[0].cols()
    }
}

fn sigmoid_clamped(arg: f64) -> f64 {
    let t = arg.clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT);
    let v = 1.0 / (1.0 + (-t).exp());
    // Keep strictly inside (0,1): saturated values are nudged by one ulp.
    if v <= 0.0 {
        0.0f64.next_up()
    } else if v >= 1.0 {
        1.0f64.next_down()
    } else {
        v
    }
}

/// Shifted sigmoid `1 / (1 + exp(-lambda * (z - 0.5)))`; fixed point at 0.5.
pub fn activate(z: f64, cfg: &ActivationConfig) -> f64 {
    sigmoid_clamped(cfg.lambda * (z - 0.5))
}

pub fn activate_mat(z: &Mat, cfg: &ActivationConfig) -> Mat {
    z.map(|v| activate(v, cfg))
}

/// Derivative of the activation recovered from activation levels alone:
/// `lambda * a * (1 - a)`. Pre-activations are never needed.
pub fn activation_derivative(a: &Mat, cfg: &ActivationConfig) -> Mat {
    let lambda = cfg.lambda;
    a.map(|v| lambda * v * (1.0 - v))
}

/// Encodes an `n x m` feature block into the initial `r x m` state: feature
/// rows are copied, output-concept rows start undecided at 0.5.
pub fn encode(x: &Mat, model: &FcmModel) -> Result<Mat> {
    if x.rows() != model.n {
        return Err(FcmError::Shape(format!(
            "expected {} feature rows, got {}",
            model.n,
            x.rows()
        )));
    }
    if x.rows() == 0 || x.cols() == 0 {
        return Err(FcmError::Shape("empty observation block".into()));
    }
    let r = model.state_size();
    let mut a = Mat::filled(r, x.cols(), 0.5);
    for i in 0..model.n {
        a.row_mut(i).copy_from_slice(x.row(i));
    }
    Ok(a)
}

/// One state-equation step `f(W * A + b)`; output entries lie in (0,1).
pub fn step(a: &Mat, model: &FcmModel) -> Result<Mat> {
    let r = model.state_size();
    if a.rows() != r {
        return Err(FcmError::Shape(format!(
            "state must have {r} rows, got {}",
            a.rows()
        )));
    }
    if !a.is_finite() || !model.w.is_finite() || !model.b.iter().all(|v| v.is_finite()) {
        return Err(FcmError::Numerical("non-finite entries in state equation".into()));
    }
    let mut z = model.w.matmul(a);
    z.add_col_broadcast(&model.b);
    Ok(activate_mat(&z, &model.activation))
}

/// Runs the map for `depth` steps from `encode(x)`.
pub fn forward(x: &Mat, model: &FcmModel) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(model.depth + 1);
    states.push(encode(x, model)?);
    for _ in 0..model.depth {
        let next = step(states.last().unwrap(), model)?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Output-concept rows of a state (`rows n..r`).
pub fn extract(a: &Mat, model: &FcmModel) -> Mat {
    a.slice_rows(model.n, model.state_size())
}

/// Weights rescaled row-wise into [-1,1] with per-concept slopes, per the
/// identity `f(W_i A + b_i) = f_i(W_i/s_i A + b_i/s_i)` where `f_i` has slope
/// `lambda * s_i`.
#[derive(Debug, Clone)]
pub struct NormalizedWeights {
    pub w: Mat,
    pub b: Vec<f64>,
    /// Per-concept slopes `lambda_i = lambda * s_i`.
    pub lambdas: Vec<f64>,
    base_lambda: f64,
}

impl NormalizedWeights {
    /// One step with the normalized parameters; reproduces [`step`] on the
    /// model this was derived from.
    pub fn step(&self, a: &Mat) -> Result<Mat> {
        let r = self.w.rows();
        if a.rows() != r {
            return Err(FcmError::Shape(format!(
                "state must have {r} rows, got {}",
                a.rows()
            )));
        }
        let mut z = self.w.matmul(a);
        z.add_col_broadcast(&self.b);
        let half_lambda = 0.5 * self.base_lambda;
        let mut out = Mat::zeros(r, a.cols());
        for i in 0..r {
            let li = self.lambdas[i];
            let (src, dst) = (z.row(i), out.row_mut(i));
            for (o, &v) in dst.iter_mut().zip(src) {
                // lambda * (s_i * z' - 0.5) == lambda_i * z' - lambda / 2
                *o = sigmoid_clamped(li * v - half_lambda);
            }
        }
        Ok(out)
    }
}

/// Rescales each row of (W, b) by `s_i = max(|W_i1|,..,|W_ir|,|b_i|)` so the
/// normalized entries fit in [-1,1]; an all-zero row keeps `s_i = 1`.
pub fn normalize_weights(model: &FcmModel) -> NormalizedWeights {
    let r = model.state_size();
    let mut w = model.w.clone();
    let mut b = model.b.clone();
    let mut lambdas = vec![0.0; r];
    for i in 0..r {
        let mut s = b[i].abs();
        for &v in w.row(i) {
            s = s.max(v.abs());
        }
        if s == 0.0 {
            s = 1.0;
        }
        for v in w.row_mut(i) {
            *v /= s;
        }
        b[i] /= s;
        lambdas[i] = model.activation.lambda() * s;
    }
    NormalizedWeights {
        w,
        b,
        lambdas,
        base_lambda: model.activation.lambda(),
    }
}

/// Reference 2-feature one-hot example map (lambda = 2, d = 3) used as a
/// fixture across the test suites.
#[cfg(test)]
pub(crate) fn example_multiclass_model() -> FcmModel {
    FcmModel::new(
        Variant::MultiClass,
        2,
        2,
        Mat::from_rows(&[
            vec![2.89, -1.50, -0.29, -1.01],
            vec![5.77, -1.43, 5.61, -4.42],
            vec![3.31, -6.80, 0.96, 0.75],
            vec![5.03, 6.75, -1.02, -0.46],
        ]),
        vec![-3.14, -1.38, 3.01, -2.18],
        3,
        ActivationConfig::new(2.0).unwrap(),
        vec!["outer".into(), "inner".into()],
        MinMaxScaler::identity(2),
    )
    .unwrap()
}

/// Reference 2-feature binary example map (lambda = 5, d = 3) used as a
/// fixture across the test suites.
#[cfg(test)]
pub(crate) fn example_binary_model() -> FcmModel {
    FcmModel::new(
        Variant::Binary,
        2,
        2,
        Mat::from_rows(&[
            vec![0.28, -0.31, -0.09],
            vec![1.17, 0.45, -0.66],
            vec![-2.43, 3.65, -1.92],
        ]),
        vec![0.28, 0.57, -1.62],
        3,
        ActivationConfig::new(5.0).unwrap(),
        vec!["neg".into(), "pos".into()],
        MinMaxScaler::identity(2),
    )
    .unwrap()
}
