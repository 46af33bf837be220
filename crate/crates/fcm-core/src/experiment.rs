//! The cross-validation experiment driver: train and score the map
//! classifier per fold, export the transformed space, collect clustering
//! scores for both spaces, and optionally run a downstream classifier on the
//! original and transformed features over the same folds.

use std::fmt::Write as _;

use crate::baselines::Downstream;
use crate::data::{kfold_split, LabeledDataset, MinMaxScaler, RawDataset};
use crate::error::{FcmError, Result};
use crate::infer::{predict, transform};
use crate::matrix::Mat;
use crate::metrics::{
    accuracy, f1_macro, majority_vote_improvement, ClusterScoreTriple, VoteOutcome,
};
use crate::model::Variant;
use crate::train::{fit, TrainConfig};

#[derive(Debug, Clone, Copy)]
pub struct FoldScores {
    pub accuracy: f64,
    pub f1_macro: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FoldClustering {
    pub train_orig: ClusterScoreTriple,
    pub train_transf: ClusterScoreTriple,
    pub test_orig: ClusterScoreTriple,
    pub test_transf: ClusterScoreTriple,
}

/// Paired downstream scores: trained on the original features vs. trained on
/// the transformed features, tested on the same fold.
#[derive(Debug, Clone, Copy)]
pub struct PipelineScores {
    pub original: FoldScores,
    pub transformed: FoldScores,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fcm: FoldScores,
    pub clustering: FoldClustering,
    pub pipeline: Option<PipelineScores>,
}

/// Everything one crossval run produces; render with [`CvReport::render`].
#[derive(Debug, Clone)]
pub struct CvReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub downstream: Option<Downstream>,
    pub stratified: bool,
    /// Set when a binary-head config met a multiclass dataset and the run
    /// proceeded with the one-hot head instead.
    pub variant_overridden: bool,
    pub folds: Vec<FoldResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    sum / count as f64
}

fn mean_triple(triples: impl Iterator<Item = ClusterScoreTriple> + Clone) -> ClusterScoreTriple {
    ClusterScoreTriple {
        davies_bouldin: mean(triples.clone().map(|t| t.davies_bouldin)),
        silhouette: mean(triples.clone().map(|t| t.silhouette)),
        calinski_harabasz: mean(triples.map(|t| t.calinski_harabasz)),
    }
}

impl CvReport {
    pub fn mean_fcm(&self) -> FoldScores {
        FoldScores {
            accuracy: mean(self.folds.iter().map(|f| f.fcm.accuracy)),
            f1_macro: mean(self.folds.iter().map(|f| f.fcm.f1_macro)),
        }
    }

    pub fn mean_clustering(&self) -> FoldClustering {
        FoldClustering {
            train_orig: mean_triple(self.folds.iter().map(|f| f.clustering.train_orig)),
            train_transf: mean_triple(self.folds.iter().map(|f| f.clustering.train_transf)),
            test_orig: mean_triple(self.folds.iter().map(|f| f.clustering.test_orig)),
            test_transf: mean_triple(self.folds.iter().map(|f| f.clustering.test_transf)),
        }
    }

    /// Majority vote on the fold-averaged triples, train split.
    pub fn vote_train(&self) -> VoteOutcome {
        let m = self.mean_clustering();
        majority_vote_improvement(&m.train_orig, &m.train_transf)
    }

    /// Majority vote on the fold-averaged triples, test split.
    pub fn vote_test(&self) -> VoteOutcome {
        let m = self.mean_clustering();
        majority_vote_improvement(&m.test_orig, &m.test_transf)
    }

    pub fn mean_pipeline(&self) -> Option<PipelineScores> {
        if self.folds.iter().any(|f| f.pipeline.is_none()) {
            return None;
        }
        let get = |f: &FoldResult| f.pipeline.unwrap();
        Some(PipelineScores {
            original: FoldScores {
                accuracy: mean(self.folds.iter().map(|f| get(f).original.accuracy)),
                f1_macro: mean(self.folds.iter().map(|f| get(f).original.f1_macro)),
            },
            transformed: FoldScores {
                accuracy: mean(self.folds.iter().map(|f| get(f).transformed.accuracy)),
                f1_macro: mean(self.folds.iter().map(|f| get(f).transformed.f1_macro)),
            },
        })
    }

    /// Plain-text report; identical runs render byte-identically.
    pub fn render(&self, dataset_label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fcm crossval report v1");
        let _ = writeln!(out, "data {dataset_label}");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "folds {}", self.folds.len());
        let _ = writeln!(
            out,
            "config classifier={} d={} lambda={} epochs={} bs={} optimizer={} lr={}",
            self.config.variant.token(),
            self.config.depth,
            self.config.lambda,
            self.config.epochs,
            self.config.batch_size.token(),
            self.config.optimizer.token(),
            self.config.learning_rate,
        );
        if self.variant_overridden {
            let _ = writeln!(out, "note classifier overridden to FCMMC (dataset is multiclass)");
        }
        let _ = writeln!(
            out,
            "pipeline {}",
            self.downstream.map_or("none".into(), |d| d.token())
        );
        let _ = writeln!(out, "transform_features all_r_rows");
        let _ = writeln!(out, "stratified {}", self.stratified);
        for (i, fold) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "fold {i}");
            let _ = writeln!(
                out,
                "  fcm acc {:.6} f1 {:.6}",
                fold.fcm.accuracy, fold.fcm.f1_macro
            );
            render_clustering(&mut out, "  ", &fold.clustering);
            if let Some(p) = &fold.pipeline {
                render_pipeline(&mut out, "  ", self.downstream, p);
            }
        }
        let m = self.mean_fcm();
        let _ = writeln!(out, "mean fcm acc {:.6} f1 {:.6}", m.accuracy, m.f1_macro);
        let mc = self.mean_clustering();
        render_clustering(&mut out, "mean ", &mc);
        let vt = self.vote_train();
        let _ = writeln!(
            out,
            "vote train {} {}:{}",
            vt.label(),
            vt.transformed_wins,
            vt.original_wins
        );
        let ve = self.vote_test();
        let _ = writeln!(
            out,
            "vote test {} {}:{}",
            ve.label(),
            ve.transformed_wins,
            ve.original_wins
        );
        if let Some(p) = self.mean_pipeline() {
            render_pipeline(&mut out, "mean ", self.downstream, &p);
        }
        out
    }
}

fn render_clustering(out: &mut String, prefix: &str, c: &FoldClustering) {
    let mut line = |name: &str, t: &ClusterScoreTriple| {
        let _ = writeln!(
            out,
            "{prefix}cluster {name} DB {:.6} SLH {:.6} CH {:.6}",
            t.davies_bouldin, t.silhouette, t.calinski_harabasz
        );
    };
    line("train orig", &c.train_orig);
    line("train transf", &c.train_transf);
    line("test orig", &c.test_orig);
    line("test transf", &c.test_transf);
}

fn render_pipeline(out: &mut String, prefix: &str, downstream: Option<Downstream>, p: &PipelineScores) {
    let name = downstream.map_or("none".into(), |d| d.token());
    let _ = writeln!(
        out,
        "{prefix}pipeline {name} orig acc {:.6} f1 {:.6} transf acc {:.6} f1 {:.6}",
        p.original.accuracy, p.original.f1_macro, p.transformed.accuracy, p.transformed.f1_macro
    );
}

/// Runs k-fold cross-validation of the map classifier on a raw table,
/// scaling per fold on the training split only. Fold f trains with seed
/// `cfg.seed + f`. With a downstream classifier attached, the identical
/// folds and the per-fold frozen transformer feed the paired comparison.
pub fn run_crossval(
    raw: &RawDataset,
    cfg: &TrainConfig,
    folds: usize,
    downstream: Option<Downstream>,
) -> Result<CvReport> {
    let k = raw.n_classes();
    let m = raw.n_observations();
    if k < 2 {
        return Err(FcmError::Data(format!("need at least 2 classes, got {k}")));
    }
    let mut cfg = cfg.clone();
    let variant_overridden = cfg.variant == Variant::Binary && k > 2;
    if variant_overridden {
        cfg.variant = Variant::MultiClass;
    }
    let plan = kfold_split(m, folds, cfg.seed, &raw.labels)?;

    let mut results = Vec::with_capacity(folds);
    for (fold_no, (train_idx, test_idx)) in plan.folds.iter().enumerate() {
        let train_raw = raw.features.gather_cols(train_idx);
        let test_raw = raw.features.gather_cols(test_idx);
        let y_train: Vec<usize> = train_idx.iter().map(|&i| raw.labels[i]).collect();
        let y_test: Vec<usize> = test_idx.iter().map(|&i| raw.labels[i]).collect();

        let scaler = MinMaxScaler::fit(&train_raw);
        let x_train = scaler.apply(&train_raw);
        let x_test = scaler.apply(&test_raw);

        let dataset = LabeledDataset::new(
            x_train.clone(),
            y_train.clone(),
            raw.label_names.clone(),
            scaler,
        )?;
        let fold_cfg = TrainConfig {
            seed: cfg.seed + fold_no as u64,
            ..cfg.clone()
        };
        let (model, _history) = fit(&dataset, &fold_cfg)?;

        let pred = predict(&model, &x_test)?;
        let fcm = FoldScores {
            accuracy: accuracy(&pred, &y_test)?,
            f1_macro: f1_macro(&pred, &y_test, k)?,
        };

        let t_train = transform(&model, &x_train)?;
        let t_test = transform(&model, &x_test)?;
        let clustering = FoldClustering {
            train_orig: ClusterScoreTriple::compute(&x_train, &y_train)?,
            train_transf: ClusterScoreTriple::compute(&t_train, &y_train)?,
            test_orig: ClusterScoreTriple::compute(&x_test, &y_test)?,
            test_transf: ClusterScoreTriple::compute(&t_test, &y_test)?,
        };

        let pipeline = match downstream {
            None => None,
            Some(ds) => Some(run_pipeline(
                &ds, &x_train, &y_train, &x_test, &y_test, &t_train, &t_test, k,
            )?),
        };

        results.push(FoldResult {
            fcm,
            clustering,
            pipeline,
        });
    }
    Ok(CvReport {
        config: cfg,
        seed: plan.seed,
        downstream,
        stratified: plan.stratified,
        variant_overridden,
        folds: results,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    ds: &Downstream,
    x_train: &Mat,
    y_train: &[usize],
    x_test: &Mat,
    y_test: &[usize],
    t_train: &Mat,
    t_test: &Mat,
    k: usize,
) -> Result<PipelineScores> {
    let pred_orig = ds.fit_predict(x_train, y_train, k, x_test)?;
    let pred_transf = ds.fit_predict(t_train, y_train, k, t_test)?;
    Ok(PipelineScores {
        original: FoldScores {
            accuracy: accuracy(&pred_orig, y_test)?,
            f1_macro: f1_macro(&pred_orig, y_test, k)?,
        },
        transformed: FoldScores {
            accuracy: accuracy(&pred_transf, y_test)?,
            f1_macro: f1_macro(&pred_transf, y_test, k)?,
        },
    })
}
