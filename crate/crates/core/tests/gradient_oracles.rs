//! Analytic gradients against central finite differences.
//!
//! Each loss is re-evaluated through the public forward path (posteriors or
//! reconstructions), not through the function under test.

use sdae_ivs::dae::{self, Activation, DaeModel, LossKind, MaskedDae};
use sdae_ivs::mlr::{self, MlrModel};
use sdae_ivs::numerics::Matrix;
use sdae_ivs::stack::{self, StackModel};
use sdae_ivs::{Rng, VariableMask};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;
/// Magnitude below which gradients are compared absolutely; central
/// differences at this step carry roundoff near 1e-10.
const FLOOR: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Worst relative error over every parameter reachable through `param`.
fn check<M: Clone>(
    model: &M,
    count: usize,
    param: impl Fn(&mut M, usize) -> &mut f64,
    analytic: impl Fn(usize) -> f64,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..count {
        let mut plus = model.clone();
        *param(&mut plus, i) += STEP;
        let mut minus = model.clone();
        *param(&mut minus, i) -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic(i), numeric));
    }
    worst
}

fn normal_matrix(rows: usize, cols: usize, sd: f64, rng: &mut Rng) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| sd * rng.standard_normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn unit_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform()).collect()
}

fn random_mask(n: usize, rng: &mut Rng) -> VariableMask {
    loop {
        let bits: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.7).collect();
        if bits.iter().any(|&b| b) {
            return VariableMask::from_bits(bits);
        }
    }
}

#[test]
fn mlr_gradient_matches_finite_differences() {
    let mut rng = Rng::new(11);
    for instance in 0..25 {
        let k = 2 + rng.below(4);
        let m = 1 + rng.below(6);
        let model = MlrModel::from_parts(
            normal_matrix(k, m, 1.0, &mut rng),
            (0..k).map(|_| rng.standard_normal()).collect(),
        )
        .unwrap();
        let n = 1 + rng.below(4);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| unit_vec(m, &mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|_| 1 + rng.below(k)).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| x.as_slice()).zip(labels.iter().copied()).collect();
        let l2 = if instance % 2 == 0 { 0.0 } else { 0.1 };
        let (_, g) = mlr::loss_and_grad(&model, &batch, l2).unwrap();

        let loss = |mm: &MlrModel<f64>| {
            let ce: f64 = batch
                .iter()
                .map(|&(x, r)| -mm.predict_proba(x).unwrap()[r - 1].ln())
                .sum::<f64>()
                / n as f64;
            ce + 0.5 * l2 * mm.weights().as_slice().iter().map(|w| w * w).sum::<f64>()
        };
        let gw = g.weights.as_slice().to_vec();
        let ew = check(&model, k * m, |mm, i| &mut mm.weights_mut().as_mut_slice()[i], |i| gw[i], loss);
        let eb = check(&model, k, |mm, i| &mut mm.biases_mut()[i], |i| g.biases[i], loss);
        assert!(ew < TOL && eb < TOL, "instance {instance}: weights {ew:e}, biases {eb:e}");
    }
}

#[test]
fn dae_gradient_matches_finite_differences() {
    let mut rng = Rng::new(12);
    let kinds = [
        (LossKind::CrossEntropy, Activation::Sigmoid),
        (LossKind::Squared, Activation::Sigmoid),
        (LossKind::Squared, Activation::Identity),
    ];
    for instance in 0..30 {
        let (kind, decoder) = kinds[instance % 3];
        let m = 2 + rng.below(5);
        let h = 1 + rng.below(5);
        let model = DaeModel::from_parts(
            normal_matrix(h, m, 0.8, &mut rng),
            (0..h).map(|_| 0.3 * rng.standard_normal()).collect(),
            (0..m).map(|_| 0.3 * rng.standard_normal()).collect(),
            decoder,
        )
        .unwrap();
        let clean = unit_vec(m, &mut rng);
        let noisy = dae::corrupt(&clean, 0.2, &mut rng).unwrap();
        let (_, g) = dae::loss_and_grad(&model, &clean, &noisy, kind).unwrap();

        let loss = |mm: &DaeModel<f64>| {
            let y = mm.decode(&mm.encode(&noisy).unwrap()).unwrap();
            dae::loss(&clean, &y, kind).unwrap()
        };
        let gw = g.weights.as_slice().to_vec();
        let ew = check(&model, h * m, |mm, i| &mut mm.weights_mut().as_mut_slice()[i], |i| gw[i], loss);
        let eb = check(&model, h, |mm, i| &mut mm.encoder_bias_mut()[i], |i| g.encoder_bias[i], loss);
        let ec = check(&model, m, |mm, i| &mut mm.decoder_bias_mut()[i], |i| g.decoder_bias[i], loss);
        assert!(
            ew < TOL && eb < TOL && ec < TOL,
            "instance {instance} ({kind:?}, {decoder:?}): W {ew:e}, b {eb:e}, c {ec:e}"
        );
    }
}

fn toy_stack(rng: &mut Rng) -> StackModel<f64> {
    let m1 = random_mask(6, rng);
    let m2 = random_mask(4, rng);
    let layer = |mask: VariableMask, h: usize, rng: &mut Rng| {
        let w = mask.popcount();
        let d = DaeModel::from_parts(
            normal_matrix(h, w, 1.0, rng),
            (0..h).map(|_| 0.5 * rng.standard_normal()).collect(),
            vec![0.0; w],
            Activation::Sigmoid,
        )
        .unwrap();
        MaskedDae::new(mask, d).unwrap()
    };
    let l1 = layer(m1, 4, rng);
    let l2 = layer(m2, 3, rng);
    let top = MlrModel::from_parts(normal_matrix(2, 3, 1.5, rng), vec![0.2, -0.1]).unwrap();
    StackModel::new(vec![l1, l2], random_mask(3, rng), top).unwrap()
}

#[test]
fn depth_two_fine_tune_gradient_matches_finite_differences() {
    let mut rng = Rng::new(13);
    for instance in 0..25 {
        let model = toy_stack(&mut rng);
        let n = 1 + rng.below(3);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| unit_vec(6, &mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|_| 1 + rng.below(2)).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| x.as_slice()).zip(labels.iter().copied()).collect();
        let (_, g) = stack::loss_and_grad(&model, &batch).unwrap();

        let loss = |mm: &StackModel<f64>| {
            batch
                .iter()
                .map(|&(x, r)| -mm.predict_proba(x).unwrap()[r - 1].ln())
                .sum::<f64>()
                / n as f64
        };
        let mut worst = 0.0f64;
        for layer in 1..=2 {
            let (gw, gb) = &g.layers[layer - 1];
            let shape = model.layers()[layer - 1].model.weights().as_slice().len();
            let h = gb.len();
            worst = worst.max(check(
                &model,
                shape,
                |mm, i| &mut mm.dae_mut(layer).unwrap().weights_mut().as_mut_slice()[i],
                |i| gw.as_slice()[i],
                loss,
            ));
            worst = worst.max(check(
                &model,
                h,
                |mm, i| &mut mm.dae_mut(layer).unwrap().encoder_bias_mut()[i],
                |i| gb[i],
                loss,
            ));
        }
        let gt = g.top_weights.as_slice().to_vec();
        worst = worst.max(check(&model, 6, |mm, i| &mut mm.top_mut().weights_mut().as_mut_slice()[i], |i| gt[i], loss));
        worst = worst.max(check(&model, 2, |mm, i| &mut mm.top_mut().biases_mut()[i], |i| g.top_biases[i], loss));
        assert!(worst < TOL, "instance {instance}: worst relative error {worst:e}");
    }
}
