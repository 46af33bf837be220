//! Acceptance gate: one test per criterion, each printing a pass line with
//! the measured numbers. Tolerances are pinned in the constants below.

use std::path::PathBuf;
use std::time::Instant;

use fcm_core::baselines::Downstream;
use fcm_core::data::{load_csv, load_model, make_moons, save_model, LabeledDataset, MinMaxScaler};
use fcm_core::experiment::run_crossval;
use fcm_core::grad::{backprop, finite_diff_gradient, max_relative_gap};
use fcm_core::infer::{d1_equivalence_check, predict, transform};
use fcm_core::loss::{softmax, LossKind};
use fcm_core::matrix::Mat;
use fcm_core::metrics::{accuracy, silhouette};
use fcm_core::model::{
    encode, forward, normalize_weights, ActivationConfig, FcmModel, Variant,
};
use fcm_core::optim::Optimizer;
use fcm_core::train::{fit, BatchSize, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [42, 43, 44];
const GRAD_TOLERANCE: f64 = 1e-4;
const D1_TOLERANCE: f64 = 1e-12;
const NORMALIZE_TOLERANCE: f64 = 1e-12;
const SOFTMAX_SUM_TOLERANCE: f64 = 1e-12;

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn random_model(rng: &mut ChaCha8Rng, variant: Variant, n: usize, k: usize, d: usize) -> FcmModel {
    let r = variant.state_size(n, k);
    let lambda = rng.random_range(0.5..5.0);
    FcmModel::new(
        variant,
        n,
        k,
        Mat::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0)),
        (0..r).map(|_| rng.random_range(-1.0..1.0)).collect(),
        d,
        ActivationConfig::new(lambda).unwrap(),
        (0..k).map(|c| format!("c{c}")).collect(),
        MinMaxScaler::identity(n),
    )
    .unwrap()
}

/// Criterion 1: backpropagation matches central finite differences of the
/// cost over >=100 random instances (n <= 5, k <= 3, d in 1..=4, m <= 8,
/// both variants), max relative error < 1e-4 per parameter, within 30 s.
#[test]
fn criterion_1_gradient_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for trial in 0..110 {
        let variant = if trial % 2 == 0 { Variant::Binary } else { Variant::MultiClass };
        let n = rng.random_range(1..=5);
        let k = if variant == Variant::Binary { 2 } else { rng.random_range(2..=3) };
        let d = 1 + trial % 4;
        let m = rng.random_range(1..=8);
        let model = random_model(&mut rng, variant, n, k, d);
        let x = Mat::from_fn(n, m, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let kind = LossKind::for_variant(variant);
        let traj = forward(&x, &model).unwrap();
        let bp = backprop(&traj, &y, kind, &model).unwrap();
        let fd = finite_diff_gradient(&x, &y, kind, &model, 1e-5).unwrap();
        let gap = max_relative_gap(&bp, &fd);
        assert!(
            gap < GRAD_TOLERANCE,
            "instance {trial} (variant {variant:?}, d={d}): relative gap {gap}"
        );
        worst = worst.max(gap);
        count += 1;
    }
    let elapsed = start.elapsed();
    assert!(count >= 100);
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "gradient sweep took {elapsed:?}, budget 30 s"
    );
    println!(
        "criterion 1 PASS: {count} instances, max relative error {worst:.3e} < {GRAD_TOLERANCE:.0e}, {elapsed:?}"
    );
}

/// Criterion 2: depth-1 binary forward output equals the closed-form
/// logistic expression within 1e-12 absolute on 1000 random models/points,
/// within 5 s.
#[test]
fn criterion_2_depth_one_logistic_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let model = random_model(&mut rng, Variant::Binary, n, 2, 1);
        let x = Mat::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let dev = d1_equivalence_check(&model, &x).unwrap();
        assert!(dev < D1_TOLERANCE, "deviation {dev}");
        worst = worst.max(dev);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!(
        "criterion 2 PASS: 1000 models, max |forward - logistic| = {worst:.3e} < {D1_TOLERANCE:.0e}, {elapsed:?}"
    );
}

fn table_config(variant: Variant, d: usize, lambda: f64, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        variant,
        depth: d,
        lambda,
        epochs,
        batch_size: BatchSize::Full,
        optimizer: Optimizer::RmsProp,
        learning_rate: lr,
        seed: 0,
    }
}

fn three_seed_mean_accuracy(csv: &str, cfg: &TrainConfig) -> f64 {
    let raw = load_csv(data_path(csv), None).unwrap();
    let mut total = 0.0;
    for seed in SEEDS {
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        let report = run_crossval(&raw, &cfg, 5, None).unwrap();
        total += report.mean_fcm().accuracy;
    }
    total / SEEDS.len() as f64
}

/// Criterion 3, bundled UCI sets: table-configured 5-fold CV over 3 seeds
/// must reach the stated accuracy floors. Budget 10 min for the whole
/// criterion (shared with the seeds test below).
#[test]
fn criterion_3_table_reproduction_iris_wine_breast_cancer() {
    let start = Instant::now();
    let cases = [
        ("iris.csv", table_config(Variant::MultiClass, 4, 3.0, 3000, 0.0005), 0.92),
        ("wine.csv", table_config(Variant::MultiClass, 4, 1.0, 3000, 0.001), 0.92),
        ("breast_cancer.csv", table_config(Variant::Binary, 5, 1.0, 1000, 0.03), 0.91),
    ];
    for (csv, cfg, floor) in cases {
        let mean = three_seed_mean_accuracy(csv, &cfg);
        assert!(mean >= floor, "{csv}: 3-seed mean accuracy {mean:.4} < floor {floor}");
        println!("criterion 3 PASS: {csv} 3-seed mean accuracy {mean:.4} >= {floor}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}, budget 10 min");
    println!("criterion 3 runtime {elapsed:?}");
}

/// Criterion 3, seeds dataset: requires `data/seeds.csv` (UCI id 236 in the
/// same CSV layout as the bundled sets: header row, 7 numeric feature
/// columns, label last). The file cannot be redistributed from this build
/// environment, so the test fails with a pointer until it is supplied;
/// with the file present it runs the full table-configured check.
#[test]
fn criterion_3_table_reproduction_seeds() {
    let path = data_path("seeds.csv");
    assert!(
        path.exists(),
        "seeds dataset missing: place the UCI seeds dataset at {} \
         (210 rows, 7 features, 3 classes; convert whitespace-separated \
         seeds_dataset.txt to CSV with a header row and the class label last)",
        path.display()
    );
    let cfg = table_config(Variant::MultiClass, 2, 1.0, 3300, 0.08);
    let mean = three_seed_mean_accuracy("seeds.csv", &cfg);
    assert!(mean >= 0.89, "seeds: 3-seed mean accuracy {mean:.4} < floor 0.89");
    println!("criterion 3 PASS: seeds.csv 3-seed mean accuracy {mean:.4} >= 0.89");
}

/// Criterion 4: on iris and wine the fold-averaged clustering triples vote
/// the transformed space improved on both splits, and the iris
/// original-space training scores land within +/-25% of the reference
/// values (DB 0.87, SLH 0.46, CH 252.51).
#[test]
fn criterion_4_clustering_improvement_votes() {
    let iris = load_csv(data_path("iris.csv"), None).unwrap();
    let mut cfg = table_config(Variant::MultiClass, 4, 3.0, 3000, 0.0005);
    cfg.seed = SEEDS[0];
    let report = run_crossval(&iris, &cfg, 5, None).unwrap();
    let vt = report.vote_train();
    let ve = report.vote_test();
    assert!(vt.improved(), "iris train vote {}:{}", vt.transformed_wins, vt.original_wins);
    assert!(ve.improved(), "iris test vote {}:{}", ve.transformed_wins, ve.original_wins);

    let orig = report.mean_clustering().train_orig;
    for (name, got, reference) in [
        ("DB", orig.davies_bouldin, 0.87),
        ("SLH", orig.silhouette, 0.46),
        ("CH", orig.calinski_harabasz, 252.51),
    ] {
        let (lo, hi) = (reference * 0.75, reference * 1.25);
        assert!(
            (lo..=hi).contains(&got),
            "iris original train {name} = {got:.4} outside [{lo:.4}, {hi:.4}]"
        );
    }
    println!(
        "criterion 4 PASS: iris votes train {}:{} test {}:{}, orig train triple ({:.3}, {:.3}, {:.2}) within 25% of (0.87, 0.46, 252.51)",
        vt.transformed_wins, vt.original_wins, ve.transformed_wins, ve.original_wins,
        orig.davies_bouldin, orig.silhouette, orig.calinski_harabasz
    );

    let wine = load_csv(data_path("wine.csv"), None).unwrap();
    let mut cfg = table_config(Variant::MultiClass, 4, 1.0, 3000, 0.001);
    cfg.seed = SEEDS[0];
    let report = run_crossval(&wine, &cfg, 5, None).unwrap();
    let vt = report.vote_train();
    let ve = report.vote_test();
    assert!(vt.improved(), "wine train vote {}:{}", vt.transformed_wins, vt.original_wins);
    assert!(ve.improved(), "wine test vote {}:{}", ve.transformed_wins, ve.original_wins);
    println!(
        "criterion 4 PASS: wine votes train {}:{} test {}:{}",
        vt.transformed_wins, vt.original_wins, ve.transformed_wins, ve.original_wins
    );
}

/// Criterion 5: over the same folds, the transform-then-classify pipeline
/// beats plain logistic regression on iris by at least 0.05 mean accuracy,
/// and on wine keeps kNN(3) within 0.01. Means over the three seeds.
#[test]
fn criterion_5_pipeline_gains() {
    let iris = load_csv(data_path("iris.csv"), None).unwrap();
    let cfg = table_config(Variant::MultiClass, 4, 3.0, 3000, 0.0005);
    let (mut lr_orig, mut lr_transf) = (0.0, 0.0);
    for seed in SEEDS {
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        let report = run_crossval(&iris, &cfg, 5, Some(Downstream::parse("logreg").unwrap())).unwrap();
        let p = report.mean_pipeline().unwrap();
        lr_orig += p.original.accuracy;
        lr_transf += p.transformed.accuracy;
    }
    lr_orig /= SEEDS.len() as f64;
    lr_transf /= SEEDS.len() as f64;
    assert!(
        lr_transf - lr_orig >= 0.05,
        "iris: fcm+logreg {lr_transf:.4} vs logreg {lr_orig:.4}, gap {:.4} < 0.05",
        lr_transf - lr_orig
    );
    println!(
        "criterion 5 PASS: iris logreg {lr_orig:.4} -> fcm+logreg {lr_transf:.4} (gap {:.4} >= 0.05)",
        lr_transf - lr_orig
    );

    let wine = load_csv(data_path("wine.csv"), None).unwrap();
    let cfg = table_config(Variant::MultiClass, 4, 1.0, 3000, 0.001);
    let (mut knn_orig, mut knn_transf) = (0.0, 0.0);
    for seed in SEEDS {
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        let report = run_crossval(&wine, &cfg, 5, Some(Downstream::Knn { k: 3 })).unwrap();
        let p = report.mean_pipeline().unwrap();
        knn_orig += p.original.accuracy;
        knn_transf += p.transformed.accuracy;
    }
    knn_orig /= SEEDS.len() as f64;
    knn_transf /= SEEDS.len() as f64;
    assert!(
        knn_transf >= knn_orig - 0.01,
        "wine: fcm+knn3 {knn_transf:.4} vs knn3 {knn_orig:.4}"
    );
    println!(
        "criterion 5 PASS: wine knn3 {knn_orig:.4} -> fcm+knn3 {knn_transf:.4} (>= knn3 - 0.01)"
    );
}

/// Criterion 6: a one-hot classifier (d=3, lambda=2) trained on 200 noisy
/// two-moons points reaches >= 0.95 training accuracy, and the transformed
/// space separates the classes better by silhouette.
#[test]
fn criterion_6_two_moons_reproduction() {
    let (raw, y) = make_moons(200, 0.1, 11);
    let scaler = MinMaxScaler::fit(&raw);
    let x = scaler.apply(&raw);
    let dataset = LabeledDataset::new(
        x.clone(),
        y.clone(),
        vec!["outer".into(), "inner".into()],
        scaler,
    )
    .unwrap();
    let cfg = TrainConfig {
        variant: Variant::MultiClass,
        depth: 3,
        lambda: 2.0,
        epochs: 5000,
        batch_size: BatchSize::Full,
        optimizer: Optimizer::RmsProp,
        learning_rate: 0.005,
        seed: 0,
    };
    let (model, _) = fit(&dataset, &cfg).unwrap();
    let acc = accuracy(&predict(&model, &x).unwrap(), &y).unwrap();
    assert!(acc >= 0.95, "two-moons training accuracy {acc:.4} < 0.95");

    let transformed = transform(&model, &x).unwrap();
    let s_orig = silhouette(&x, &y).unwrap();
    let s_transf = silhouette(&transformed, &y).unwrap();
    assert!(
        s_transf > s_orig,
        "transformed silhouette {s_transf:.4} does not exceed original {s_orig:.4}"
    );
    println!(
        "criterion 6 PASS: two-moons training accuracy {acc:.4} >= 0.95, silhouette {s_orig:.4} -> {s_transf:.4}"
    );
}

/// Criterion 7: the crossval command is deterministic; two runs with the
/// same seed write byte-identical reports.
#[test]
fn criterion_7_deterministic_reports() {
    let dir = std::env::temp_dir().join("fcm-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let report_a = dir.join("det_a.txt");
    let report_b = dir.join("det_b.txt");
    let data = data_path("iris.csv");
    // small config keeps the double run quick; determinism is about the
    // command, not the workload
    let quick = dir.join("quick.conf");
    std::fs::write(&quick, "classifier = FCMMC\nd = 2\nlambda = 2\nepochs = 40\nbs = 20\noptimizer = adam\nlr = 0.001\n").unwrap();
    for report in [&report_a, &report_b] {
        fcm_cli::run_capturing(&[
            "crossval",
            "--data",
            data.to_str().unwrap(),
            "--config",
            quick.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--seed",
            "7",
            "--pipeline",
            "knn3",
        ])
        .unwrap();
    }
    let a = std::fs::read(&report_a).unwrap();
    let b = std::fs::read(&report_b).unwrap();
    assert_eq!(a, b, "reports differ between identical runs");
    assert!(!a.is_empty());
    println!("criterion 7 PASS: two crossval runs wrote byte-identical {}-byte reports", a.len());
}

/// Criterion 8: the invariant bundle. Softmax columns sum to one within
/// 1e-12, post-step states stay strictly inside (0,1), persistence round
/// trips preserve predictions exactly, and weight normalization preserves
/// forward outputs within 1e-12.
#[test]
fn criterion_8_invariant_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // softmax column sums
    for _ in 0..200 {
        let k = rng.random_range(2..6);
        let m = rng.random_range(1..6);
        let y = Mat::from_fn(k, m, |_, _| rng.random_range(-40.0..40.0));
        let p = softmax(&y);
        for j in 0..m {
            let sum: f64 = (0..k).map(|i| p[(i, j)]).sum();
            assert!((sum - 1.0).abs() < SOFTMAX_SUM_TOLERANCE, "column sum {sum}");
            for i in 0..k {
                assert!(p[(i, j)] > 0.0);
            }
        }
    }

    // post-step states in the open unit interval, including extreme weights
    for trial in 0..100 {
        let variant = if trial % 2 == 0 { Variant::Binary } else { Variant::MultiClass };
        let n = rng.random_range(1..=4);
        let k = if variant == Variant::Binary { 2 } else { 3 };
        let mut model = random_model(&mut rng, variant, n, k, 2);
        let scale = 10f64.powi(rng.random_range(0..6));
        model.w = model.w.map(|v| v * scale);
        let x = Mat::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0));
        let mut a = encode(&x, &model).unwrap();
        for _ in 0..3 {
            a = fcm_core::model::step(&a, &model).unwrap();
            assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    // persistence round trip preserves predictions exactly
    let dir = std::env::temp_dir().join("fcm-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    for trial in 0..10 {
        let variant = if trial % 2 == 0 { Variant::Binary } else { Variant::MultiClass };
        let k = if variant == Variant::Binary { 2 } else { 3 };
        let model = random_model(&mut rng, variant, 3, k, 3);
        let path = dir.join(format!("inv_{trial}.model"));
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let x = Mat::from_fn(3, 20, |_, _| rng.random_range(0.0..1.0));
        assert_eq!(predict(&model, &x).unwrap(), predict(&loaded, &x).unwrap());
        let before = forward(&x, &model).unwrap();
        let after = forward(&x, &loaded).unwrap();
        for (s1, s2) in before.states().iter().zip(after.states()) {
            assert_eq!(s1.data(), s2.data(), "round trip must be bit-exact");
        }
    }

    // weight normalization preserves the full trajectory within tolerance
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let variant = if trial % 2 == 0 { Variant::Binary } else { Variant::MultiClass };
        let k = if variant == Variant::Binary { 2 } else { 3 };
        let mut model = random_model(&mut rng, variant, 3, k, 4);
        for j in 0..model.state_size() {
            model.w[(0, j)] *= 8.0;
        }
        let norm = normalize_weights(&model);
        assert!(norm.w.data().iter().all(|v| v.abs() <= 1.0));
        assert!(norm.b.iter().all(|v| v.abs() <= 1.0));
        let x = Mat::from_fn(3, 5, |_, _| rng.random_range(0.0..1.0));
        let mut a = encode(&x, &model).unwrap();
        let mut an = a.clone();
        for _ in 0..model.depth {
            a = fcm_core::model::step(&a, &model).unwrap();
            an = norm.step(&an).unwrap();
            let gap = a.max_abs_diff(&an);
            assert!(gap < NORMALIZE_TOLERANCE, "trajectory gap {gap}");
            worst = worst.max(gap);
        }
    }
    println!(
        "criterion 8 PASS: softmax sums, open-interval states, exact persistence round trips, normalization gap <= {worst:.3e}"
    );
}
