//! Analytic loss gradients against central finite differences of the same
//! loss with the negative weights frozen.

use compound3d::data::Triple;
use compound3d::model::{Model, ModelConfig, NormOrder, VariantSpec};
use compound3d::training::{loss_and_grad, LossConfig};

mod common;
use common::max_gradient_error;

#[test]
fn every_operator_kind_alone() {
    for v in [
        "T h - t",
        "S h - t",
        "R h - t",
        "F h - t",
        "H h - t",
        "h - R t",
        "H h - H t",
    ] {
        for seed in 0..5 {
            let e = max_gradient_error(v, NormOrder::L2, 1.0, seed);
            assert!(e < 1e-4, "{v} seed {seed}: relative error {e:e}");
        }
    }
}

#[test]
fn mixed_length_three_chain() {
    for seed in 0..10 {
        let e = max_gradient_error("R.S.T h - t", NormOrder::L2, 1.0, seed);
        assert!(e < 1e-4, "seed {seed}: {e:e}");
        let e = max_gradient_error("F.H h - S t", NormOrder::L2, 0.5, seed);
        assert!(e < 1e-4, "seed {seed}: {e:e}");
    }
}

#[test]
fn l1_distance_gradients() {
    for seed in 0..5 {
        let e = max_gradient_error("T.R h - t", NormOrder::L1, 1.0, seed);
        assert!(e < 1e-4, "seed {seed}: {e:e}");
    }
}

#[test]
fn temperature_only_changes_the_weights() {
    // the analytic gradient at any α equals the frozen-weight oracle at that α
    for alpha in [0.0, 0.3, 2.0] {
        let e = max_gradient_error("R.T h - t", NormOrder::L2, alpha, 3);
        assert!(e < 1e-4, "alpha {alpha}: {e:e}");
    }
}

#[test]
fn duplicate_rows_accumulate() {
    let cfg = ModelConfig::new(3, VariantSpec::parse("T h - t").unwrap());
    let model = Model::init(3, 1, &cfg, 0).unwrap();
    let loss = LossConfig {
        negatives: 1,
        ..Default::default()
    };
    let one = [Triple::new(0, 0, 1)];
    let neg = [Triple::new(0, 0, 2)];
    let (_, g1) = loss_and_grad(&model, &one, &neg, &loss).unwrap();
    let (_, g2) = loss_and_grad(&model, &[one[0], one[0]], &[neg[0], neg[0]], &loss).unwrap();
    // batch mean of two copies equals one copy
    for (a, b) in g1.entities.get(0).unwrap().iter().zip(g2.entities.get(0).unwrap()) {
        assert!((a - b).abs() < 1e-15);
    }
}
