//! Prediction heads and the depth-(d-1) feature transformer.

use crate::error::{FcmError, Result};
use crate::loss::softmax;
use crate::matrix::Mat;
use crate::model::{extract, forward, FcmModel, Variant};

/// Binary head: label 1 iff the output concept reaches 0.5 (boundary
/// inclusive).
pub fn predict_binary(model: &FcmModel, x: &Mat) -> Result<Vec<usize>> {
    if model.variant != Variant::Binary {
        return Err(FcmError::InvalidArg(
            "predict_binary needs an FCMB model".into(),
        ));
    }
    let traj = forward(x, model)?;
    let out = extract(traj.final_state(), model);
    Ok(out.row(0).iter().map(|&v| usize::from(v >= 0.5)).collect())
}

/// One-hot head: argmax over the output concepts. Softmax is monotone, so
/// normalizing first cannot change the winner; ties go to the lowest index.
pub fn predict_multiclass(model: &FcmModel, x: &Mat) -> Result<Vec<usize>> {
    if model.variant != Variant::MultiClass {
        return Err(FcmError::InvalidArg(
            "predict_multiclass needs an FCMMC model".into(),
        ));
    }
    let traj = forward(x, model)?;
    let out = extract(traj.final_state(), model);
    Ok((0..out.cols()).map(|j| argmax_col(&out, j)).collect())
}

/// Variant-dispatched prediction.
pub fn predict(model: &FcmModel, x: &Mat) -> Result<Vec<usize>> {
    match model.variant {
        Variant::Binary => predict_binary(model, x),
        Variant::MultiClass => predict_multiclass(model, x),
    }
}

fn argmax_col(m: &Mat, j: usize) -> usize {
    let mut best = 0;
    for i in 1..m.rows() {
        if m[(i, j)] > m[(best, j)] {
            best = i;
        }
    }
    best
}

/// Output-concept scores per observation: the raw activation for the binary
/// head, softmax-normalized activations (columns summing to 1) for one-hot.
pub fn predict_proba(model: &FcmModel, x: &Mat) -> Result<Mat> {
    let traj = forward(x, model)?;
    let out = extract(traj.final_state(), model);
    Ok(match model.variant {
        Variant::Binary => out,
        Variant::MultiClass => softmax(&out),
    })
}

/// The transformed feature space: the full r-row state after d-1 steps,
/// covering both transformed inputs and output-concept activations. With
/// d = 1 this is the encoded input itself.
pub fn transform(model: &FcmModel, x: &Mat) -> Result<Mat> {
    let traj = forward(x, model)?;
    Ok(traj.state(model.depth - 1).clone())
}

/// For a depth-1 binary map, compares the forward output against the
/// closed-form logistic expression `sigma(w'x + b')` with
/// `w' = lambda * W_r,1..n` and `b' = lambda * (0.5 W_rr + b_r - 0.5)`.
/// Returns the largest absolute deviation over the given observations.
pub fn d1_equivalence_check(model: &FcmModel, x: &Mat) -> Result<f64> {
    if model.variant != Variant::Binary {
        return Err(FcmError::InvalidArg("equivalence check needs an FCMB model".into()));
    }
    if model.depth != 1 {
        return Err(FcmError::InvalidArg(format!(
            "equivalence check needs depth 1, model has {}",
            model.depth
        )));
    }
    let traj = forward(x, model)?;
    let out = extract(traj.final_state(), model);

    let lambda = model.activation.lambda();
    let r = model.state_size();
    let row = r - 1;
    let w_prime: Vec<f64> = (0..model.n).map(|j| lambda * model.w[(row, j)]).collect();
    let b_prime = lambda * (0.5 * model.w[(row, row)] + model.b[row] - 0.5);

    let mut worst: f64 = 0.0;
    for j in 0..x.cols() {
        let mut z = b_prime;
        for (i, wi) in w_prime.iter().enumerate() {
            z += wi * x[(i, j)];
        }
        let logistic = 1.0 / (1.0 + (-z).exp());
        worst = worst.max((out[(0, j)] - logistic).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MinMaxScaler;
    use crate::model::{encode, step, ActivationConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_with(variant: Variant, n: usize, k: usize, d: usize, lambda: f64, seed: u64) -> FcmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = variant.state_size(n, k);
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

    /// Depth-1 binary model whose output concept lands exactly on a chosen
    /// activation: zero weights and b_r = 0.5 + t/lambda gives f(0.5 + t/...)
    fn boundary_model(pre: f64) -> FcmModel {
        // f(z) = 0.5 at z = 0.5; tune b_r to hit the requested pre-activation
        FcmModel::new(
            Variant::Binary,
            1,
            2,
            Mat::zeros(2, 2),
            vec![0.0, pre],
            1,
            ActivationConfig::new(1.0).unwrap(),
            vec!["no".into(), "yes".into()],
            MinMaxScaler::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn binary_threshold_is_inclusive() {
        let x = Mat::from_vec(1, 1, vec![0.3]);
        // pre-activation 0.5 -> activation exactly 0.5 -> label 1
        assert_eq!(predict_binary(&boundary_model(0.5), &x).unwrap(), vec![1]);
        // slightly below / above
        assert_eq!(predict_binary(&boundary_model(0.4), &x).unwrap(), vec![0]);
        assert_eq!(predict_binary(&boundary_model(0.6), &x).unwrap(), vec![1]);
    }

    #[test]
    fn heads_reject_wrong_variant() {
        let b = model_with(Variant::Binary, 2, 2, 1, 1.0, 0);
        let mc = model_with(Variant::MultiClass, 2, 3, 1, 1.0, 0);
        let x = Mat::from_fn(2, 1, |_, _| 0.4);
        assert!(predict_binary(&mc, &x).is_err());
        assert!(predict_multiclass(&b, &x).is_err());
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let m = Mat::from_vec(2, 1, vec![0.5, 0.5]);
        assert_eq!(argmax_col(&m, 0), 0);
        let m = Mat::from_vec(3, 1, vec![0.1, 0.9, 0.3]);
        assert_eq!(argmax_col(&m, 0), 1);
    }

    #[test]
    fn softmax_does_not_change_the_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let k = rng.random_range(2..6);
            let y = Mat::from_fn(k, 1, |_, _| rng.random_range(-10.0..10.0));
            let s = softmax(&y);
            assert_eq!(argmax_col(&y, 0), argmax_col(&s, 0));
        }
    }

    #[test]
    fn proba_columns_sum_to_one_for_multiclass() {
        let m = model_with(Variant::MultiClass, 3, 4, 2, 2.0, 9);
        let x = Mat::from_fn(3, 7, |i, j| ((i * 3 + j) as f64 * 0.129).fract());
        let p = predict_proba(&m, &x).unwrap();
        assert_eq!(p.rows(), 4);
        for j in 0..7 {
            let sum: f64 = (0..4).map(|i| p[(i, j)]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_outputs_give_uniform_probabilities() {
        let mut m = model_with(Variant::MultiClass, 2, 4, 1, 1.0, 3);
        m.w = Mat::zeros(6, 6);
        m.b = vec![0.0; 6];
        let x = Mat::from_fn(2, 2, |_, _| 0.7);
        let p = predict_proba(&m, &x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn binary_proba_is_consistent_with_predictions() {
        let m = model_with(Variant::Binary, 2, 2, 3, 4.0, 21);
        let x = Mat::from_fn(2, 9, |i, j| ((i * 5 + j) as f64 * 0.117).fract());
        let p = predict_proba(&m, &x).unwrap();
        let labels = predict_binary(&m, &x).unwrap();
        for (j, &lab) in labels.iter().enumerate() {
            assert_eq!(lab, usize::from(p[(0, j)] >= 0.5));
        }
    }

    #[test]
    fn example_map_scores_deep_class_one_point_near_one() {
        let m = crate::model::example_binary_model();
        let x = Mat::from_rows(&[vec![0.1], vec![0.1]]);
        let p = predict_proba(&m, &x).unwrap();
        assert!(p[(0, 0)] > 0.95, "p = {}", p[(0, 0)]);
        assert_eq!(predict_binary(&m, &x).unwrap(), vec![1]);
    }

    #[test]
    fn transform_with_depth_one_is_the_encoding() {
        let m = model_with(Variant::MultiClass, 2, 3, 1, 2.0, 4);
        let x = Mat::from_fn(2, 3, |i, j| ((i + j) as f64 * 0.21).fract());
        let t = transform(&m, &x).unwrap();
        assert_eq!(t.data(), encode(&x, &m).unwrap().data());
    }

    #[test]
    fn transform_plus_one_step_reaches_the_prediction_state() {
        let m = model_with(Variant::Binary, 3, 2, 4, 3.0, 15);
        let x = Mat::from_fn(3, 5, |i, j| ((i * 2 + j) as f64 * 0.171).fract());
        let t = transform(&m, &x).unwrap();
        let stepped = step(&t, &m).unwrap();
        let raw = extract(&stepped, &m);
        let traj = forward(&x, &m).unwrap();
        let direct = extract(traj.final_state(), &m);
        assert_eq!(raw.data(), direct.data());
    }

    #[test]
    fn example_map_compresses_moons_into_a_thin_slab() {
        // the reference one-hot map, applied to raw two-moons coordinates,
        // squeezes the first transformed coordinate into [0, 0.001] while
        // still classifying the arcs
        let m = crate::model::example_multiclass_model();
        let (x, y) = crate::data::make_moons(200, 0.1, 0);
        let t = transform(&m, &x).unwrap();
        for j in 0..t.cols() {
            let v = t[(0, j)];
            assert!((0.0..=0.001).contains(&v), "x1 at {j} = {v}");
        }
        let pred = predict_multiclass(&m, &x).unwrap();
        let hits = pred.iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(hits as f64 / y.len() as f64 >= 0.9);
    }

    #[test]
    fn d1_forward_equals_closed_form_logistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..200 {
            let n = rng.random_range(1..=6);
            let m = model_with(Variant::Binary, n, 2, 1, rng.random_range(0.5..8.0), trial);
            let x = Mat::from_fn(n, 4, |_, _| rng.random_range(0.0..1.0));
            let dev = d1_equivalence_check(&m, &x).unwrap();
            assert!(dev < 1e-12, "trial {trial}: deviation {dev}");
        }
    }

    #[test]
    fn d1_bias_term_special_case() {
        // W_rr = 0, b_r = 0.5, lambda = 1 collapses b' to zero
        let lambda = 1.0;
        let w_rr = 0.0;
        let b_r = 0.5;
        let b_prime = lambda * (0.5 * w_rr + b_r - 0.5);
        assert_eq!(b_prime, 0.0);
    }

    #[test]
    fn d1_check_rejects_wrong_shape_or_variant() {
        let deep = model_with(Variant::Binary, 2, 2, 3, 1.0, 0);
        let x = Mat::from_fn(2, 1, |_, _| 0.5);
        assert!(d1_equivalence_check(&deep, &x).is_err());
        let mc = model_with(Variant::MultiClass, 2, 2, 1, 1.0, 0);
        assert!(d1_equivalence_check(&mc, &x).is_err());
    }
}
