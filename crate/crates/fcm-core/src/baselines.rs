//! Minimal downstream classifiers used to measure the transformer's effect:
//! plain gradient-descent softmax regression and k-nearest neighbors.

use crate::error::{FcmError, Result};
use crate::loss::softmax;
use crate::matrix::Mat;

/// Linear softmax classifier: `argmax(W x + b)`.
#[derive(Debug, Clone)]
pub struct LogRegModel {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Unregularized full-batch gradient descent from zero weights, so the fit is
/// deterministic. `iters`/`lr` control how hard it fits.
pub fn logreg_fit(x: &Mat, y: &[usize], k_classes: usize, iters: usize, lr: f64) -> Result<LogRegModel> {
    if x.cols() != y.len() || x.cols() == 0 {
        return Err(FcmError::Shape(format!(
            "{} observations vs {} labels",
            x.cols(),
            y.len()
        )));
    }
    if k_classes < 2 {
        return Err(FcmError::InvalidArg("need at least 2 classes".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= k_classes) {
        return Err(FcmError::InvalidArg(format!("label {bad} out of range 0..{k_classes}")));
    }
    let n = x.rows();
    let m = x.cols();
    let mut w = Mat::zeros(k_classes, n);
    let mut b = vec![0.0; k_classes];
    for _ in 0..iters {
        let mut logits = w.matmul(x);
        logits.add_col_broadcast(&b);
        let mut g = softmax(&logits);
        for (j, &label) in y.iter().enumerate() {
            g[(label, j)] -= 1.0;
        }
        let scale = 1.0 / m as f64;
        let gw = g.matmul_transpose_rhs(x);
        for (wv, gv) in w.data_mut().iter_mut().zip(gw.data()) {
            *wv -= lr * scale * gv;
        }
        for (bv, gs) in b.iter_mut().zip(g.row_sums()) {
            *bv -= lr * scale * gs;
        }
    }
    Ok(LogRegModel { w, b })
}

pub fn logreg_predict(model: &LogRegModel, x: &Mat) -> Vec<usize> {
    let mut logits = model.w.matmul(x);
    logits.add_col_broadcast(&model.b);
    (0..x.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..logits.rows() {
                if logits[(i, j)] > logits[(best, j)] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Majority label among the k Euclidean nearest training points. Distance
/// ties prefer the lower training index; vote ties the lowest label.
pub fn knn_predict(train_x: &Mat, train_y: &[usize], query_x: &Mat, k: usize) -> Result<Vec<usize>> {
    let m = train_x.cols();
    if m == 0 {
        return Err(FcmError::InvalidArg("empty training set".into()));
    }
    if train_y.len() != m {
        return Err(FcmError::Shape(format!("{m} training points vs {} labels", train_y.len())));
    }
    if k == 0 || k > m {
        return Err(FcmError::InvalidArg(format!(
            "k must be in 1..={m}, got {k}"
        )));
    }
    if query_x.rows() != train_x.rows() {
        return Err(FcmError::Shape(format!(
            "query has {} features, training {}",
            query_x.rows(),
            train_x.rows()
        )));
    }
    let n_classes = train_y.iter().max().unwrap() + 1;
    let mut out = Vec::with_capacity(query_x.cols());
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(m);
    for j in 0..query_x.cols() {
        dist.clear();
        for t in 0..m {
            let mut d2 = 0.0;
            for i in 0..train_x.rows() {
                let d = train_x[(i, t)] - query_x[(i, j)];
                d2 += d * d;
            }
            dist.push((d2, t));
        }
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; n_classes];
        for &(_, t) in dist.iter().take(k) {
            votes[train_y[t]] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// The classifier trained downstream of the transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downstream {
    LogReg { iters: usize },
    Knn { k: usize },
}

/// Defaults calibrated so the plain-gradient logistic regression behaves
/// like the usual library configuration on small tabular data.
pub const LOGREG_DEFAULT_ITERS: usize = 100;
pub const LOGREG_DEFAULT_LR: f64 = 0.3;

impl Downstream {
    pub fn token(&self) -> String {
        match self {
            Downstream::LogReg { .. } => "logreg".into(),
            Downstream::Knn { k } => format!("knn{k}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Downstream::LogReg {
                iters: LOGREG_DEFAULT_ITERS,
            }),
            "knn3" => Ok(Downstream::Knn { k: 3 }),
            "knn5" => Ok(Downstream::Knn { k: 5 }),
            other => Err(FcmError::InvalidArg(format!(
                "unknown pipeline classifier {other:?}, expected logreg, knn3 or knn5"
            ))),
        }
    }

    /// Fit on training data and predict the query block.
    pub fn fit_predict(
        &self,
        train_x: &Mat,
        train_y: &[usize],
        k_classes: usize,
        query_x: &Mat,
    ) -> Result<Vec<usize>> {
        match self {
            Downstream::LogReg { iters } => {
                let model = logreg_fit(train_x, train_y, k_classes, *iters, LOGREG_DEFAULT_LR)?;
                Ok(logreg_predict(&model, query_x))
            }
            Downstream::Knn { k } => knn_predict(train_x, train_y, query_x, *k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(sep: f64, per: usize, seed: u64) -> (Mat, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 2 * per;
        let mut x = Mat::zeros(2, m);
        let mut y = vec![0usize; m];
        for j in 0..m {
            let c = j / per;
            y[j] = c;
            x[(0, j)] = c as f64 * sep + rng.random_range(-0.3..0.3);
            x[(1, j)] = rng.random_range(-0.3..0.3);
        }
        (x, y)
    }

    #[test]
    fn logreg_separates_separable_blobs() {
        let (x, y) = blobs(4.0, 20, 1);
        let model = logreg_fit(&x, &y, 2, 300, 0.5).unwrap();
        let pred = logreg_predict(&model, &x);
        assert_eq!(accuracy(&pred, &y).unwrap(), 1.0);
    }

    #[test]
    fn logreg_bias_stays_balanced_on_symmetric_data() {
        // mirrored observations with opposite labels: the bias difference
        // between the two classes must vanish
        let mut x = Mat::zeros(2, 8);
        let mut y = vec![0usize; 8];
        let pts = [(0.9, 0.3), (0.4, -0.7), (1.3, 0.1), (0.2, 1.1)];
        for (i, &(a, b)) in pts.iter().enumerate() {
            x[(0, 2 * i)] = a;
            x[(1, 2 * i)] = b;
            y[2 * i] = 0;
            x[(0, 2 * i + 1)] = -a;
            x[(1, 2 * i + 1)] = -b;
            y[2 * i + 1] = 1;
        }
        let model = logreg_fit(&x, &y, 2, 500, 0.2).unwrap();
        assert!((model.b[0] - model.b[1]).abs() < 1e-9, "bias gap {:?}", model.b);
    }

    #[test]
    fn logreg_is_deterministic() {
        let (x, y) = blobs(2.0, 10, 3);
        let a = logreg_fit(&x, &y, 2, 50, 0.3).unwrap();
        let b = logreg_fit(&x, &y, 2, 50, 0.3).unwrap();
        assert_eq!(a.w.data(), b.w.data());
        assert_eq!(a.b, b.b);
    }

    #[test]
    fn knn_exact_match_with_k1() {
        let (x, y) = blobs(3.0, 5, 7);
        let pred = knn_predict(&x, &y, &x, 1).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn knn_vote_tie_takes_lowest_label() {
        // two coincident neighbors with opposite labels
        let train = Mat::from_vec(1, 2, vec![0.5, 0.5]);
        let labels = vec![1usize, 0];
        let q = Mat::from_vec(1, 1, vec![0.5]);
        assert_eq!(knn_predict(&train, &labels, &q, 2).unwrap(), vec![0]);
    }

    #[test]
    fn knn_distance_tie_prefers_lower_index() {
        // equidistant neighbors left and right; k=1 must take index 0
        let train = Mat::from_vec(1, 2, vec![0.0, 1.0]);
        let labels = vec![1usize, 0];
        let q = Mat::from_vec(1, 1, vec![0.5]);
        assert_eq!(knn_predict(&train, &labels, &q, 1).unwrap(), vec![1]);
    }

    #[test]
    fn knn_rejects_bad_arguments() {
        let train = Mat::from_vec(1, 2, vec![0.0, 1.0]);
        let labels = vec![0usize, 1];
        let q = Mat::from_vec(1, 1, vec![0.5]);
        assert!(knn_predict(&Mat::zeros(1, 0), &[], &q, 1).is_err());
        assert!(knn_predict(&train, &labels, &q, 3).is_err());
        assert!(knn_predict(&train, &labels, &Mat::zeros(2, 1), 1).is_err());
    }

    #[test]
    fn downstream_tokens_round_trip() {
        assert_eq!(Downstream::parse("knn3").unwrap(), Downstream::Knn { k: 3 });
        assert_eq!(Downstream::parse("knn5").unwrap(), Downstream::Knn { k: 5 });
        assert!(matches!(
            Downstream::parse("logreg").unwrap(),
            Downstream::LogReg { .. }
        ));
        assert!(Downstream::parse("svm").is_err());
    }
}
