//! CSV ingestion, min-max scaling, label encoding, seeded fold splitting,
//! model persistence, and the synthetic two-moons sampler.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FcmError, Result};
use crate::matrix::Mat;
use crate::model::{ActivationConfig, FcmModel, Variant};

/// Version tag written at the top of model files.
const MODEL_FORMAT_HEADER: &str = "fcm-model v1";

/// A numeric table parsed from CSV: features as rows (n x m) plus an
/// integer-encoded label per observation.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub features: Mat,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl RawDataset {
    pub fn n_features(&self) -> usize {
        self.features.rows()
    }

    pub fn n_observations(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }
}

/// Parses a comma-separated file with a header row. One column holds labels
/// (default: the last); every other cell must be numeric. Label strings are
/// encoded by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<usize>) -> Result<RawDataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| FcmError::Data("empty file: expected a header row".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let width = columns.len();
    if width < 2 {
        return Err(FcmError::Data(
            "need at least one feature column and one label column".into(),
        ));
    }
    let label_col = label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(FcmError::Data(format!(
            "label column {label_col} out of range, file has {width} columns"
        )));
    }
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, c)| c.to_string())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(FcmError::Data(format!(
                "row {}: expected {width} columns, found {}",
                line_no + 1,
                cells.len()
            )));
        }
        let mut row = Vec::with_capacity(width - 1);
        for (col, cell) in cells.iter().enumerate() {
            if col == label_col {
                let next = label_names.len();
                let id = *label_index.entry(cell.to_string()).or_insert_with(|| {
                    label_names.push(cell.to_string());
                    next
                });
                labels.push(id);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    FcmError::Data(format!(
                        "row {}, column {} ({:?}): not a number",
                        line_no + 1,
                        col + 1,
                        cell
                    ))
                })?;
                if !v.is_finite() {
                    return Err(FcmError::Data(format!(
                        "row {}, column {}: non-finite value",
                        line_no + 1,
                        col + 1
                    )));
                }
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FcmError::Data("no data rows after the header".into()));
    }
    let n = width - 1;
    let m = rows.len();
    let features = Mat::from_fn(n, m, |i, j| rows[j][i]);
    Ok(RawDataset {
        features,
        labels,
        label_names,
        feature_names,
    })
}

/// Per-feature (min, max) pairs fitted on training data only.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on the columns of an n x m feature block.
    pub fn fit(x: &Mat) -> Self {
        let mut mins = vec![f64::INFINITY; x.rows()];
        let mut maxs = vec![f64::NEG_INFINITY; x.rows()];
        for i in 0..x.rows() {
            for &v in x.row(i) {
                mins[i] = mins[i].min(v);
                maxs[i] = maxs[i].max(v);
            }
        }
        MinMaxScaler { mins, maxs }
    }

    /// Pass-through scaler for data already in [0, 1].
    pub fn identity(n: usize) -> Self {
        MinMaxScaler {
            mins: vec![0.0; n],
            maxs: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mins.is_empty()
    }

    /// `(x - min) / (max - min)` per feature, clamped into [0, 1]; a constant
    /// feature maps to 0.
    pub fn apply(&self, x: &Mat) -> Mat {
        assert_eq!(x.rows(), self.len(), "scaler feature count mismatch");
        Mat::from_fn(x.rows(), x.cols(), |i, j| {
            let range = self.maxs[i] - self.mins[i];
            if range <= 0.0 {
                0.0
            } else {
                ((x[(i, j)] - self.mins[i]) / range).clamp(0.0, 1.0)
            }
        })
    }
}

/// Scaled observations with integer labels; the label vector doubles as the
/// fixed clustering assignment when scoring feature spaces.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: Mat,
    pub y: Vec<usize>,
    pub label_names: Vec<String>,
    pub scaler: MinMaxScaler,
}

impl LabeledDataset {
    pub fn new(x: Mat, y: Vec<usize>, label_names: Vec<String>, scaler: MinMaxScaler) -> Result<Self> {
        let k = label_names.len();
        if k < 2 {
            return Err(FcmError::Data(format!("need at least 2 classes, got {k}")));
        }
        if x.cols() != y.len() {
            return Err(FcmError::Shape(format!(
                "{} observations vs {} labels",
                x.cols(),
                y.len()
            )));
        }
        if x.cols() < k {
            return Err(FcmError::Data(format!(
                "need at least as many observations ({}) as classes ({k})",
                x.cols()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= k) {
            return Err(FcmError::Data(format!("label {bad} out of range 0..{k}")));
        }
        if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FcmError::Data("features must be scaled into [0,1]".into()));
        }
        Ok(LabeledDataset {
            x,
            y,
            label_names,
            scaler,
        })
    }

    /// Scales a raw table with a scaler fitted on all of it.
    pub fn from_raw(raw: &RawDataset) -> Result<Self> {
        let scaler = MinMaxScaler::fit(&raw.features);
        LabeledDataset::new(
            scaler.apply(&raw.features),
            raw.labels.clone(),
            raw.label_names.clone(),
            scaler,
        )
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }
}

/// Deterministic fold assignment: disjoint test sets covering 0..m.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    pub seed: u64,
    /// False when some class had fewer members than folds and the split fell
    /// back to a plain shuffle.
    pub stratified: bool,
}

/// Stratified k-fold split: within each class, shuffled members are dealt
/// round-robin across folds, so per-fold class counts differ by at most one.
/// Classes smaller than the fold count trigger a plain shuffle split instead.
pub fn kfold_split(m: usize, k_folds: usize, seed: u64, labels: &[usize]) -> Result<FoldPlan> {
    if k_folds < 2 || k_folds > m {
        return Err(FcmError::InvalidArg(format!(
            "fold count must be in 2..={m}, got {k_folds}"
        )));
    }
    if labels.len() != m {
        return Err(FcmError::Shape(format!("{m} observations vs {} labels", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |&mx| mx + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    by_class.retain(|v| !v.is_empty());
    let stratified = by_class.iter().all(|members| members.len() >= k_folds);

    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k_folds];
    if stratified {
        for members in &mut by_class {
            members.shuffle(&mut rng);
            for (pos, &idx) in members.iter().enumerate() {
                test_sets[pos % k_folds].push(idx);
            }
        }
    } else {
        let mut all: Vec<usize> = (0..m).collect();
        all.shuffle(&mut rng);
        for (pos, &idx) in all.iter().enumerate() {
            test_sets[pos % k_folds].push(idx);
        }
    }

    let mut folds = Vec::with_capacity(k_folds);
    for test in &mut test_sets {
        test.sort_unstable();
        let test_mask: std::collections::HashSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..m).filter(|i| !test_mask.contains(i)).collect();
        folds.push((train, test.clone()));
    }
    Ok(FoldPlan {
        folds,
        seed,
        stratified,
    })
}

fn write_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // Display round-trips f64 exactly
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Serializes a model to the versioned text format.
pub fn save_model(model: &FcmModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_FORMAT_HEADER}");
    let _ = writeln!(out, "variant {}", model.variant.token());
    let _ = writeln!(out, "n {}", model.n);
    let _ = writeln!(out, "k {}", model.k);
    let _ = writeln!(out, "d {}", model.depth);
    let _ = writeln!(out, "lambda {}", model.activation.lambda());
    let _ = writeln!(out, "labels {}", model.class_labels.join(","));
    out.push_str("w ");
    write_floats(&mut out, model.w.data().iter().copied());
    out.push_str("b ");
    write_floats(&mut out, model.b.iter().copied());
    out.push_str("scaler_min ");
    write_floats(&mut out, model.scaler.mins.iter().copied());
    out.push_str("scaler_max ");
    write_floats(&mut out, model.scaler.maxs.iter().copied());
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

fn parse_floats(line: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| FcmError::Data(format!("model file: bad number {t:?} in {what}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expect {
        return Err(FcmError::Data(format!(
            "model file: {what} expected {expect} values, found {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FcmError::Data(format!("model file: non-finite value in {what}")));
    }
    Ok(values)
}

/// Loads a model saved by [`save_model`]; the round trip reproduces forward
/// outputs bit-identically.
pub fn load_model(path: impl AsRef<Path>) -> Result<FcmModel> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != MODEL_FORMAT_HEADER {
        return Err(FcmError::Data(format!(
            "unsupported model format {header:?}, expected {MODEL_FORMAT_HEADER:?}"
        )));
    }
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| FcmError::Data(format!("model file: malformed line {line:?}")))?;
        fields.insert(key, value);
    }
    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| FcmError::Data(format!("model file: missing field {key:?} (truncated?)")))
    };
    let variant = Variant::parse(get("variant")?.trim())?;
    let n: usize = get("n")?
        .trim()
        .parse()
        .map_err(|_| FcmError::Data("model file: bad n".into()))?;
    let k: usize = get("k")?
        .trim()
        .parse()
        .map_err(|_| FcmError::Data("model file: bad k".into()))?;
    let d: usize = get("d")?
        .trim()
        .parse()
        .map_err(|_| FcmError::Data("model file: bad d".into()))?;
    let lambda: f64 = get("lambda")?
        .trim()
        .parse()
        .map_err(|_| FcmError::Data("model file: bad lambda".into()))?;
    let labels: Vec<String> = get("labels")?.split(',').map(|s| s.to_string()).collect();
    let r = variant.state_size(n, k);
    let w = Mat::from_vec(r, r, parse_floats(get("w")?, r * r, &format!("w (r={r})"))?);
    let b = parse_floats(get("b")?, r, "b")?;
    let mins = parse_floats(get("scaler_min")?, n, "scaler_min")?;
    let maxs = parse_floats(get("scaler_max")?, n, "scaler_max")?;
    FcmModel::new(
        variant,
        n,
        k,
        w,
        b,
        d,
        ActivationConfig::new(lambda)?,
        labels,
        MinMaxScaler { mins, maxs },
    )
}

/// Two interleaved half-circles with Gaussian jitter: the classic nonlinear
/// binary benchmark. Returns raw (unscaled) 2 x n coordinates and labels.
pub fn make_moons(n_samples: usize, noise: f64, seed: u64) -> (Mat, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_outer = n_samples / 2;
    let n_inner = n_samples - n_outer;
    let mut x = Mat::zeros(2, n_samples);
    let mut y = vec![0usize; n_samples];
    let gauss = move |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    for j in 0..n_outer {
        let t = std::f64::consts::PI * j as f64 / (n_outer.max(2) - 1) as f64;
        x[(0, j)] = t.cos() + noise * gauss(&mut rng);
        x[(1, j)] = t.sin() + noise * gauss(&mut rng);
        y[j] = 0;
    }
    for i in 0..n_inner {
        let j = n_outer + i;
        let t = std::f64::consts::PI * i as f64 / (n_inner.max(2) - 1) as f64;
        x[(0, j)] = 1.0 - t.cos() + noise * gauss(&mut rng);
        x[(1, j)] = 1.0 - t.sin() - 0.5 + noise * gauss(&mut rng);
        y[j] = 1;
    }
    (x, y)
}
