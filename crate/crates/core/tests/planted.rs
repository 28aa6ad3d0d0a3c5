//! End-to-end runs on the planted synthetic problem and a tiny overfit check.

use sdae_ivs::dae::{train_dae, Activation, LossKind, MaskedDae};
use sdae_ivs::data::{gen_synthetic, split};
use sdae_ivs::ivs::run_ivs;
use sdae_ivs::mlr::{evaluate, train_mlr};
use sdae_ivs::stack::{fine_tune, pretrain, LayerConfig};
use sdae_ivs::{
    Dataset, DaeTrainConfig, IvsConfig, Matrix, MlrModel, Rng, StackConfig, StackModel, SyntheticSpec, TrainConfig, VariableMask,
};

fn planted(seed: u64) -> (Dataset, Dataset, Dataset) {
    let spec = SyntheticSpec {
        num_relevant: 20,
        num_irrelevant: 80,
        num_classes: 5,
        class_separation: 3.0,
        noise_sd: 0.5,
        examples_per_split: (1000, 3000, 2000),
    };
    let (d, _) = gen_synthetic(&spec, &mut Rng::new(seed)).unwrap();
    split(&d, 1000, 3000).unwrap()
}

fn ivs_config() -> IvsConfig {
    IvsConfig {
        threshold: 0.3,
        max_iterations: 10,
        mlr: TrainConfig::new(0.05, 60, 5, 0),
    }
}

/// Class means are drawn per seed, so single-seed difficulty varies; the
/// bound is on the mean over seeds.
#[test]
fn full_input_mlr_is_accurate() {
    let errors: Vec<f64> = (0..10)
        .map(|seed| {
            let (tr, va, _) = planted(seed);
            let cfg = TrainConfig::new(0.05, 60, 5, 3);
            let m = train_mlr(&tr, &va, &VariableMask::all_ones(100), &cfg).unwrap();
            evaluate(|x| m.predict(x), &va).unwrap().error_rate
        })
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(mean <= 0.05, "{errors:?}");
}

#[test]
fn selection_history_shrinks_until_stop() {
    for seed in [10, 11, 12] {
        let (tr, va, _) = planted(seed);
        let r = run_ivs(&tr, &va, &ivs_config(), &mut Rng::new(seed + 100)).unwrap();
        let pops: Vec<usize> = r.history.iter().map(|s| s.popcount).collect();
        assert_eq!(pops[0], 100);
        let (last, head) = pops.split_last().unwrap();
        assert!(head.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {pops:?}");
        assert!(last <= head.last().unwrap(), "seed {seed}: {pops:?}");
        assert!(r.mask.popcount() < 100, "seed {seed}: {pops:?}");
    }
}

#[test]
fn depth_one_sdae_ivs_is_accurate() {
    let (tr, va, te) = planted(10);
    let cfg = StackConfig {
        layers: vec![LayerConfig {
            dae: DaeTrainConfig {
                hidden_units: 50,
                noise_sd: 0.2,
                learning_rate: 0.05,
                epochs: 60,
                loss: LossKind::CrossEntropy,
                decoder: Activation::Sigmoid,
            },
            ivs: ivs_config(),
        }],
        top: TrainConfig::new(0.05, 60, 5, 0),
        fine_tune: TrainConfig::new(0.05, 30, 5, 4),
        ivs_enabled: true,
        top_ivs: None,
    };
    let pre = pretrain(&tr, &va, &cfg, &Rng::new(5)).unwrap();
    let m = fine_tune(&pre, &tr, &va, &cfg.fine_tune).unwrap();
    let e = evaluate(|x| m.predict(x), &te).unwrap();
    assert!(1.0 - e.error_rate >= 0.9, "test error {}", e.error_rate);
}

#[test]
fn overfit_single_example_reconstructs() {
    let x = vec![0.1, 0.8, 0.35, 0.6, 0.95, 0.2];
    let d = Dataset::new(Matrix::from_rows(std::slice::from_ref(&x)).unwrap(), vec![1], 2).unwrap();
    let cfg = DaeTrainConfig {
        hidden_units: 8,
        noise_sd: 0.0,
        learning_rate: 0.5,
        epochs: 5000,
        loss: LossKind::CrossEntropy,
        decoder: Activation::Sigmoid,
    };
    let dae = train_dae(&d, &cfg, &mut Rng::new(1)).unwrap();
    let stack = StackModel::new(
        vec![MaskedDae::new(VariableMask::all_ones(6), dae).unwrap()],
        VariableMask::all_ones(8),
        MlrModel::zeros(2, 8),
    )
    .unwrap();
    let y = stack.reconstruct_through(&x, 1).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() <= 0.05, "{x:?} vs {y:?}");
    }
}
