//! Command-line driver: train, crossval, predict, transform, gradcheck.

use std::collections::HashMap;
use std::fmt::Write as _;

use fcm_core::baselines::Downstream;
use fcm_core::data::{load_csv, save_model, LabeledDataset};
use fcm_core::error::FcmError;
use fcm_core::experiment::run_crossval;
use fcm_core::grad::{backprop, finite_diff_gradient, max_relative_gap};
use fcm_core::infer::{predict, transform};
use fcm_core::loss::{evaluate_loss, LossKind};
use fcm_core::matrix::Mat;
use fcm_core::metrics::accuracy;
use fcm_core::model::{forward, ActivationConfig, FcmModel, Variant};
use fcm_core::optim::Optimizer;
use fcm_core::train::{fit, BatchSize, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEFAULT_SEED: u64 = 42;
const GRADCHECK_THRESHOLD: f64 = 1e-4;

/// Errors carrying the process exit code: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<FcmError> for CliError {
    fn from(e: FcmError) -> Self {
        match e {
            FcmError::InvalidArg(_) => CliError::Usage(e.to_string()),
            FcmError::Numerical(_) => CliError::Numerical(e.to_string()),
            FcmError::Shape(_) | FcmError::Data(_) | FcmError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

pub const USAGE: &str = "usage: fcm <command> [flags]

commands:
  train      --data <csv> --config <file> --model-out <path> [--seed N] [--label-col I]
  crossval   --data <csv> --config <file> --report <path> [--folds K=5] [--seed N]
             [--pipeline logreg|knn3|knn5] [--label-col I]
  predict    --model <path> --data <csv> --out <csv>
  transform  --model <path> --data <csv> --out <csv>
  gradcheck  [--n N=4] [--k K=3] [--d D=3] [--variant FCMB|FCMMC] [--trials T=50] [--seed N]

--seed defaults to 42; --label-col defaults to the last column.

config file: one key=value per line with the keys
  classifier (FCMB|FCMMC), d, lambda, epochs, bs (-1 = full batch),
  optimizer (sgd|rmsprop|adam), lr
";

struct Flags {
    values: HashMap<String, String>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(name) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument {arg:?}")));
            };
            if !allowed.contains(&name) {
                return Err(CliError::Usage(format!("unknown flag --{name}")));
            }
            let value = it
                .next()
                .ok_or_else(|| CliError::Usage(format!("flag --{name} needs a value")))?;
            if values.insert(name.to_string(), value.clone()).is_some() {
                return Err(CliError::Usage(format!("flag --{name} given twice")));
            }
        }
        Ok(Flags { values })
    }

    fn required(&self, name: &str) -> Result<&str, CliError> {
        self.values
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{name}")))
    }

    fn optional(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, CliError> {
        match self.values.get(name) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("flag --{name}: cannot parse {v:?}"))),
        }
    }
}

/// Parses the flat key=value config file into a training configuration.
/// Blank lines and lines starting with '#' are skipped.
pub fn parse_config(path: &str, seed: u64) -> Result<TrainConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {path:?}: {e}")))?;
    let mut fields: HashMap<String, String> = HashMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value", line_no + 1))
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    for key in fields.keys() {
        if !["classifier", "d", "lambda", "epochs", "bs", "optimizer", "lr"].contains(&key.as_str())
        {
            return Err(CliError::Usage(format!("config: unknown key {key:?}")));
        }
    }
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("config: missing key {key:?}")))
    };
    let parse_num = |key: &str, v: &str| {
        v.parse::<f64>()
            .map_err(|_| CliError::Usage(format!("config: bad value for {key}: {v:?}")))
    };
    let depth_raw = get("d")?;
    let depth = depth_raw
        .parse::<usize>()
        .map_err(|_| CliError::Usage(format!("config: bad value for d: {depth_raw:?}")))?;
    let epochs_raw = get("epochs")?;
    let epochs = epochs_raw
        .parse::<usize>()
        .map_err(|_| CliError::Usage(format!("config: bad value for epochs: {epochs_raw:?}")))?;
    Ok(TrainConfig {
        variant: Variant::parse(get("classifier")?).map_err(|e| CliError::Usage(e.to_string()))?,
        depth,
        lambda: parse_num("lambda", get("lambda")?)?,
        epochs,
        batch_size: BatchSize::parse(get("bs")?).map_err(|e| CliError::Usage(e.to_string()))?,
        optimizer: Optimizer::parse(get("optimizer")?).map_err(|e| CliError::Usage(e.to_string()))?,
        learning_rate: parse_num("lr", get("lr")?)?,
        seed,
    })
}

/// Entry point used by both `main` and the test suites. Writes user-facing
/// output through `out` (stdout in production).
pub fn run(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage(USAGE.into()));
    };
    match command.as_str() {
        "train" => cmd_train(&args[1..], out),
        "crossval" => cmd_crossval(&args[1..], out),
        "predict" => cmd_predict(&args[1..], out),
        "transform" => cmd_transform(&args[1..], out),
        "gradcheck" => cmd_gradcheck(&args[1..], out),
        other => Err(CliError::Usage(format!(
            "unknown command {other:?}\n\n{USAGE}"
        ))),
    }
}

fn cmd_train(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let flags = Flags::parse(args, &["data", "config", "model-out", "seed", "label-col"])?;
    let data_path = flags.required("data")?;
    let config_path = flags.required("config")?;
    let model_out = flags.required("model-out")?;
    let seed = flags.parsed("seed", DEFAULT_SEED)?;
    let label_col = match flags.optional("label-col") {
        None => None,
        Some(v) => Some(v.parse::<usize>().map_err(|_| {
            CliError::Usage(format!("flag --label-col: cannot parse {v:?}"))
        })?),
    };

    let mut cfg = parse_config(config_path, seed)?;
    let raw = load_csv(data_path, label_col)?;
    if cfg.variant == Variant::Binary && raw.n_classes() > 2 {
        eprintln!(
            "warning: config asks for FCMB but {data_path:?} has {} classes; training FCMMC instead",
            raw.n_classes()
        );
        cfg.variant = Variant::MultiClass;
    }
    let dataset = LabeledDataset::from_raw(&raw)?;
    let (model, history) = fit(&dataset, &cfg)?;
    save_model(&model, model_out)?;

    let traj = forward(&dataset.x, &model)?;
    let final_loss = evaluate_loss(
        traj.final_state(),
        &dataset.y,
        LossKind::for_variant(model.variant),
        &model,
    )?;
    let pred = predict(&model, &dataset.x)?;
    let train_acc = accuracy(&pred, &dataset.y)?;
    let _ = writeln!(out, "model written to {model_out}");
    let _ = writeln!(
        out,
        "loss first {:.6} last {:.6} final {:.6}",
        history.first().unwrap(),
        history.last().unwrap(),
        final_loss
    );
    let _ = writeln!(out, "training accuracy {train_acc:.6}");
    Ok(())
}

fn cmd_crossval(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let flags = Flags::parse(
        args,
        &["data", "config", "report", "folds", "seed", "pipeline", "label-col"],
    )?;
    let data_path = flags.required("data")?;
    let config_path = flags.required("config")?;
    let report_path = flags.required("report")?;
    let folds: usize = flags.parsed("folds", 5)?;
    if folds < 2 {
        return Err(CliError::Usage(format!("need at least 2 folds, got {folds}")));
    }
    let seed = flags.parsed("seed", DEFAULT_SEED)?;
    let label_col = match flags.optional("label-col") {
        None => None,
        Some(v) => Some(v.parse::<usize>().map_err(|_| {
            CliError::Usage(format!("flag --label-col: cannot parse {v:?}"))
        })?),
    };
    let downstream = match flags.optional("pipeline") {
        None => None,
        Some(token) => Some(Downstream::parse(token).map_err(|e| CliError::Usage(e.to_string()))?),
    };

    let cfg = parse_config(config_path, seed)?;
    let raw = load_csv(data_path, label_col)?;
    let report = run_crossval(&raw, &cfg, folds, downstream)?;
    if report.variant_overridden {
        eprintln!(
            "warning: config asks for FCMB but {data_path:?} has {} classes; ran FCMMC instead",
            raw.n_classes()
        );
    }
    if !report.stratified {
        eprintln!("warning: a class has fewer members than folds; fell back to a plain shuffle split");
    }
    let text = report.render(data_path);
    std::fs::write(report_path, &text).map_err(FcmError::Io)?;

    let mean = report.mean_fcm();
    let _ = writeln!(out, "report written to {report_path}");
    let _ = writeln!(
        out,
        "mean fcm accuracy {:.6} f1 {:.6} over {folds} folds",
        mean.accuracy, mean.f1_macro
    );
    if let Some(p) = report.mean_pipeline() {
        let _ = writeln!(
            out,
            "pipeline {} accuracy: original {:.6} transformed {:.6}",
            report.downstream.unwrap().token(),
            p.original.accuracy,
            p.transformed.accuracy
        );
    }
    Ok(())
}

/// Parses a feature-only CSV (header row, all cells numeric).
fn load_features(path: &str) -> Result<Mat, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{path:?}: {e}")))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{path:?}: empty file, expected a header row")))?;
    let width = header.split(',').count();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(CliError::Data(format!(
                "{path:?} row {}: expected {width} columns, found {}",
                line_no + 1,
                cells.len()
            )));
        }
        let row: Vec<f64> = cells
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    CliError::Data(format!(
                        "{path:?} row {}, column {}: not a number",
                        line_no + 1,
                        col + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{path:?}: no data rows")));
    }
    Ok(Mat::from_fn(width, rows.len(), |i, j| rows[j][i]))
}

fn load_model_and_features(
    flags: &Flags,
) -> Result<(FcmModel, Mat), CliError> {
    let model = fcm_core::data::load_model(flags.required("model")?)?;
    let features = load_features(flags.required("data")?)?;
    if features.rows() != model.n {
        return Err(CliError::Data(format!(
            "data has {} feature columns, model expects n={}",
            features.rows(),
            model.n
        )));
    }
    let scaled = model.scaler.apply(&features);
    Ok((model, scaled))
}

fn cmd_predict(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let flags = Flags::parse(args, &["model", "data", "out"])?;
    let out_path = flags.required("out")?;
    let (model, x) = load_model_and_features(&flags)?;
    let labels = predict(&model, &x)?;
    let mut text = String::from("label\n");
    for l in labels {
        let _ = writeln!(text, "{}", model.class_labels[l]);
    }
    std::fs::write(out_path, text).map_err(FcmError::Io)?;
    let _ = writeln!(out, "predictions written to {out_path}");
    Ok(())
}

fn cmd_transform(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let flags = Flags::parse(args, &["model", "data", "out"])?;
    let out_path = flags.required("out")?;
    let (model, x) = load_model_and_features(&flags)?;
    let t = transform(&model, &x)?;
    let mut text = String::new();
    for i in 0..t.rows() {
        if i > 0 {
            text.push(',');
        }
        let _ = write!(text, "c{i}");
    }
    text.push('\n');
    for j in 0..t.cols() {
        for i in 0..t.rows() {
            if i > 0 {
                text.push(',');
            }
            let _ = write!(text, "{}", t[(i, j)]);
        }
        text.push('\n');
    }
    std::fs::write(out_path, text).map_err(FcmError::Io)?;
    let _ = writeln!(out, "transformed features written to {out_path} ({} columns)", t.rows());
    Ok(())
}

fn cmd_gradcheck(args: &[String], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let flags = Flags::parse(args, &["n", "k", "d", "variant", "trials", "seed"])?;
    let n: usize = flags.parsed("n", 4)?;
    let k: usize = flags.parsed("k", 3)?;
    let d: usize = flags.parsed("d", 3)?;
    let trials: usize = flags.parsed("trials", 50)?;
    let seed: u64 = flags.parsed("seed", DEFAULT_SEED)?;
    let variant = match flags.optional("variant") {
        None => Variant::MultiClass,
        Some(v) => Variant::parse(v).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    if n == 0 || n > 16 {
        return Err(CliError::Usage(format!("--n must be in 1..=16, got {n}")));
    }
    let k = if variant == Variant::Binary { 2 } else { k };
    if !(2..=16).contains(&k) {
        return Err(CliError::Usage(format!("--k must be in 2..=16, got {k}")));
    }
    if d == 0 || d > 8 {
        return Err(CliError::Usage(format!("--d must be in 1..=8, got {d}")));
    }
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }

    let kind = LossKind::for_variant(variant);
    let r = variant.state_size(n, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut analytic_worst = 0.0f64;
    for _ in 0..trials {
        let m = rng.random_range(1..=8);
        let lambda = rng.random_range(0.5..5.0);
        let model = FcmModel::new(
            variant,
            n,
            k,
            Mat::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0)),
            (0..r).map(|_| rng.random_range(-1.0..1.0)).collect(),
            d,
            ActivationConfig::new(lambda).map_err(CliError::from)?,
            (0..k).map(|c| format!("c{c}")).collect(),
            fcm_core::data::MinMaxScaler::identity(n),
        )?;
        let x = Mat::from_fn(n, m, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let traj = forward(&x, &model)?;
        let bp = backprop(&traj, &y, kind, &model)?;
        let fd = finite_diff_gradient(&x, &y, kind, &model, 1e-5)?;
        worst = worst.max(max_relative_gap(&bp, &fd));

        if variant == Variant::Binary && d == 1 {
            // closed-form logistic gradient on the output row
            let lambda = model.activation.lambda();
            let a0 = traj.state(0);
            let yt = traj.final_state();
            for j in 0..r {
                let mut expect = 0.0;
                for (c, &label) in y.iter().enumerate() {
                    expect += lambda * (yt[(n, c)] - label as f64) * a0[(j, c)];
                }
                expect /= m as f64;
                analytic_worst = analytic_worst.max((bp.dw[(n, j)] - expect).abs());
            }
        }
    }
    let _ = writeln!(
        out,
        "gradcheck: {trials} trials, variant {}, n={n} k={k} d={d}",
        variant.token()
    );
    let _ = writeln!(out, "max relative error vs finite differences: {worst:.3e}");
    if variant == Variant::Binary && d == 1 {
        let _ = writeln!(
            out,
            "max abs deviation from the analytic logistic gradient: {analytic_worst:.3e}"
        );
    }
    if worst >= GRADCHECK_THRESHOLD {
        return Err(CliError::Numerical(format!(
            "gradient check failed: {worst:.3e} >= {GRADCHECK_THRESHOLD:.0e}"
        )));
    }
    let _ = writeln!(out, "pass (threshold {GRADCHECK_THRESHOLD:.0e})");
    Ok(())
}

/// Convenience for tests: run a command and capture stdout.
pub fn run_capturing(args: &[&str]) -> Result<String, CliError> {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let mut buf = Vec::new();
    run(&owned, &mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}
