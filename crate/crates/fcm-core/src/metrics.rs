//! Classification scores and internal clustering validation.
//!
//! The clustering indices score a labeled point set (columns of a feature
//! matrix) with Euclidean distances; they are used to compare the original
//! and transformed feature spaces under the fixed ground-truth assignment.

use crate::error::{FcmError, Result};
use crate::matrix::Mat;

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(FcmError::Shape(format!(
            "accuracy needs equal nonempty label vectors, got {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Unweighted mean over classes of 2PR/(P+R). A class that is never
/// predicted and never present contributes 0.
pub fn f1_macro(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(FcmError::Shape(format!(
            "f1 needs equal nonempty label vectors, got {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= k) {
        return Err(FcmError::InvalidArg(format!("label {bad} out of range 0..{k}")));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut sum = 0.0;
    for c in 0..k {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok(sum / k as f64)
}

/// The three internal clustering scores reported side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterScoreTriple {
    /// Davies-Bouldin (lower = better).
    pub davies_bouldin: f64,
    /// Silhouette coefficient in [-1, 1] (higher = better).
    pub silhouette: f64,
    /// Calinski-Harabasz (higher = better).
    pub calinski_harabasz: f64,
}

impl ClusterScoreTriple {
    pub fn compute(x: &Mat, z: &[usize]) -> Result<Self> {
        Ok(ClusterScoreTriple {
            davies_bouldin: davies_bouldin(x, z)?,
            silhouette: silhouette(x, z)?,
            calinski_harabasz: calinski_harabasz(x, z)?,
        })
    }
}

struct Clusters {
    members: Vec<Vec<usize>>,
}

fn group(x: &Mat, z: &[usize], min_clusters: usize) -> Result<Clusters> {
    if x.cols() != z.len() {
        return Err(FcmError::Shape(format!(
            "{} observations vs {} labels",
            x.cols(),
            z.len()
        )));
    }
    let k = match z.iter().max() {
        Some(&mx) => mx + 1,
        None => return Err(FcmError::InvalidArg("empty point set".into())),
    };
    let mut members = vec![Vec::new(); k];
    for (j, &c) in z.iter().enumerate() {
        members[c].push(j);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < min_clusters {
        return Err(FcmError::InvalidArg(format!(
            "need at least {min_clusters} non-empty clusters, got {}",
            members.len()
        )));
    }
    Ok(Clusters { members })
}

fn centroid(x: &Mat, idx: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; x.rows()];
    for &j in idx {
        for (ci, v) in c.iter_mut().zip(x.col(j)) {
            *ci += v;
        }
    }
    for ci in &mut c {
        *ci /= idx.len() as f64;
    }
    c
}

fn dist_point_to(x: &Mat, j: usize, p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        let d = x[(i, j)] - pi;
        acc += d * d;
    }
    acc.sqrt()
}

fn dist_points(x: &Mat, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.rows() {
        let d = x[(i, a)] - x[(i, b)];
        acc += d * d;
    }
    acc.sqrt()
}

/// Davies-Bouldin index: mean over clusters of the worst
/// `(s_i + s_j) / d(c_i, c_j)` ratio, with `s` the mean distance to the
/// centroid. Coinciding centroids contribute a zero ratio.
pub fn davies_bouldin(x: &Mat, z: &[usize]) -> Result<f64> {
    let clusters = group(x, z, 2)?;
    let k = clusters.members.len();
    let centroids: Vec<Vec<f64>> = clusters.members.iter().map(|m| centroid(x, m)).collect();
    let scatters: Vec<f64> = clusters
        .members
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|&j| dist_point_to(x, j, c)).sum::<f64>() / m.len() as f64)
        .collect();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut d2 = 0.0;
            for (a, b) in centroids[i].iter().zip(&centroids[j]) {
                d2 += (a - b) * (a - b);
            }
            let d = d2.sqrt();
            if d > 0.0 {
                worst = worst.max((scatters[i] + scatters[j]) / d);
            }
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Mean silhouette `(b - a) / max(a, b)` over points; a singleton-cluster
/// point scores 0.
pub fn silhouette(x: &Mat, z: &[usize]) -> Result<f64> {
    if x.cols() < 3 {
        return Err(FcmError::InvalidArg(format!(
            "silhouette needs at least 3 points, got {}",
            x.cols()
        )));
    }
    let clusters = group(x, z, 2)?;
    let k = clusters.members.len();
    // cluster index per point, against the compacted cluster list
    let mut of_point = vec![0usize; x.cols()];
    for (ci, m) in clusters.members.iter().enumerate() {
        for &j in m {
            of_point[j] = ci;
        }
    }
    // sum of distances from each point to each cluster
    let mut sums = vec![0.0; x.cols() * k];
    for a in 0..x.cols() {
        for b in (a + 1)..x.cols() {
            let d = dist_points(x, a, b);
            sums[a * k + of_point[b]] += d;
            sums[b * k + of_point[a]] += d;
        }
    }
    let mut total = 0.0;
    for j in 0..x.cols() {
        let own = of_point[j];
        let own_size = clusters.members[own].len();
        if own_size <= 1 {
            continue; // scores 0
        }
        let a = sums[j * k + own] / (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for (ci, m) in clusters.members.iter().enumerate() {
            if ci != own {
                b = b.min(sums[j * k + ci] / m.len() as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / x.cols() as f64)
}

/// Calinski-Harabasz index in trace form:
/// `(between / (k-1)) / (within / (m-k))`. Zero within-cluster dispersion
/// returns the +inf sentinel.
pub fn calinski_harabasz(x: &Mat, z: &[usize]) -> Result<f64> {
    let clusters = group(x, z, 2)?;
    let k = clusters.members.len();
    let m = x.cols();
    if m <= k {
        return Err(FcmError::InvalidArg(format!(
            "Calinski-Harabasz needs more points ({m}) than clusters ({k})"
        )));
    }
    let overall = centroid(x, &(0..m).collect::<Vec<_>>());
    let mut between = 0.0;
    let mut within = 0.0;
    for members in &clusters.members {
        let c = centroid(x, members);
        let mut d2 = 0.0;
        for (a, b) in c.iter().zip(&overall) {
            d2 += (a - b) * (a - b);
        }
        between += members.len() as f64 * d2;
        for &j in members {
            let d = dist_point_to(x, j, &c);
            within += d * d;
        }
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (m - k) as f64))
}

/// Outcome of the majority vote between the original-space and
/// transformed-space score triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome {
    pub transformed_wins: u8,
    pub original_wins: u8,
}

impl VoteOutcome {
    /// At least two of the three scores strictly favoring the transformed
    /// space declare it improved; ties vote for neither side.
    pub fn improved(&self) -> bool {
        self.transformed_wins >= 2
    }

    pub fn label(&self) -> &'static str {
        if self.improved() {
            "improved"
        } else {
            "not_improved"
        }
    }
}

/// Per-score vote with each score's own polarity (DB lower, SLH and CH
/// higher = better; +inf CH beats any finite value).
pub fn majority_vote_improvement(orig: &ClusterScoreTriple, transf: &ClusterScoreTriple) -> VoteOutcome {
    let mut t = 0u8;
    let mut o = 0u8;
    let mut count = |better_for_transf: bool, better_for_orig: bool| {
        if better_for_transf {
            t += 1;
        } else if better_for_orig {
            o += 1;
        }
    };
    count(
        transf.davies_bouldin < orig.davies_bouldin,
        orig.davies_bouldin < transf.davies_bouldin,
    );
    count(transf.silhouette > orig.silhouette, orig.silhouette > transf.silhouette);
    count(
        transf.calinski_harabasz > orig.calinski_harabasz,
        orig.calinski_harabasz > transf.calinski_harabasz,
    );
    VoteOutcome {
        transformed_wins: t,
        original_wins: o,
    }
}
