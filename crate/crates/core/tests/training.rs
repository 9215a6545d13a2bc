//! Negative sampling statistics and small end-to-end training runs.

use compound3d::data::{FilterIndex, Triple, TripleStore};
use compound3d::model::{Model, ModelConfig, VariantSpec};
use compound3d::optim::AdamConfig;
use compound3d::search::enumerate_pairs;
use compound3d::synthetic::symmetric_pairs;
use compound3d::training::{
    loss_and_grad, sample_negatives, train, train_with_observer, validation_mrr, CorruptionMode, LossConfig,
    TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn corrupted_ids_are_uniform() {
    let ne = 100;
    let cfg = LossConfig {
        negatives: 1000,
        corruption: CorruptionMode::Tail,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let batch = vec![Triple::new(3, 0, 17); 100];
    let negs = sample_negatives(&batch, ne, &cfg, &mut rng);
    assert_eq!(negs.len(), 100_000);
    let mut counts = vec![0usize; ne];
    for t in &negs {
        counts[t.tail as usize] += 1;
    }
    assert_eq!(counts[17], 0, "original tail must never be drawn");
    let expected = negs.len() as f64 / (ne - 1) as f64;
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .filter(|(e, _)| *e != 17)
        .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((ne - 2) as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

/// 4 entities in two symmetric pairs; one reverse edge is held out.
fn toy() -> (TripleStore, FilterIndex) {
    let store = TripleStore {
        train: vec![Triple::new(0, 0, 1), Triple::new(1, 0, 0), Triple::new(2, 0, 3)],
        valid: vec![],
        test: vec![Triple::new(3, 0, 2)],
    };
    let filter = FilterIndex::build(&store);
    (store, filter)
}

fn toy_configs() -> (LossConfig, TrainConfig) {
    let loss = LossConfig {
        margin: 2.0,
        temperature: 1.0,
        negatives: 2,
        corruption: CorruptionMode::Both,
    };
    let tc = TrainConfig {
        batch_size: 3,
        max_steps: 2000,
        seed: 7,
        adam: AdamConfig::with_lr(0.02),
        ..Default::default()
    };
    (loss, tc)
}

#[test]
fn rotation_recovers_held_out_inverse() {
    let (store, filter) = toy();
    let (loss, tc) = toy_configs();
    let cfg = ModelConfig::new(3, VariantSpec::parse("R h - t").unwrap());
    let model = Model::init(4, 1, &cfg, 7).unwrap();
    let out = train(model, &store, &loss, &tc).unwrap();
    assert_eq!(validation_mrr(&out.model, &store.test, &filter, None).unwrap(), 1.0);
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn loss_decreases_for_every_single_pair_variant() {
    let (store, _) = toy();
    let (loss, tc) = toy_configs();
    for pair in enumerate_pairs() {
        let variant = pair.to_variant();
        let cfg = ModelConfig::new(3, variant.clone());
        let out = train(Model::init(4, 1, &cfg, 1).unwrap(), &store, &loss, &tc).unwrap();
        let early = median(&out.losses[..=500]);
        let late = median(&out.losses[1500..]);
        assert!(early > late, "{variant}: {early} vs {late}");
    }
}

fn run(threads: usize) -> Model {
    let ds = symmetric_pairs(40, 10, 3);
    let cfg = ModelConfig::new(6, VariantSpec::parse("R.S h - T t").unwrap());
    let model = Model::init(80, 1, &cfg, 3).unwrap();
    let loss = LossConfig {
        negatives: 8,
        ..Default::default()
    };
    let tc = TrainConfig {
        batch_size: 40,
        max_steps: 50,
        seed: 3,
        adam: AdamConfig::with_lr(0.01),
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| train(model, &ds.store, &loss, &tc).unwrap().model)
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let bits = |m: &Model| {
        m.entity_table()
            .iter()
            .chain(m.relation_table())
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(bits(&a), bits(&c));
}

#[test]
fn validation_is_logged_and_best_kept() {
    let ds = symmetric_pairs(30, 10, 0);
    let cfg = ModelConfig::new(6, VariantSpec::parse("R h - t").unwrap());
    let model = Model::init(60, 1, &cfg, 0).unwrap();
    let loss = LossConfig {
        margin: 2.0,
        negatives: 8,
        ..Default::default()
    };
    let tc = TrainConfig {
        batch_size: 16,
        max_steps: 300,
        eval_every: 100,
        seed: 0,
        adam: AdamConfig::with_lr(0.05),
        ..Default::default()
    };
    let mut seen = Vec::new();
    let out = train_with_observer(model, &ds.store, &loss, &tc, &mut |r| seen.push(r.clone())).unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen, out.log);
    assert!(seen.iter().all(|r| r.val_mrr.is_some()));
    let best = out.best.as_ref().unwrap();
    let max = seen.iter().filter_map(|r| r.val_mrr).fold(0.0, f64::max);
    assert_eq!(best.val_mrr, max);
    let line = seen[0].to_string();
    assert!(line.starts_with("step=100 loss=") && line.contains(" val_mrr=") && line.contains(" wall="));
}

#[test]
fn unit_entities_stay_on_the_sphere() {
    let (store, _) = toy();
    let (loss, mut tc) = toy_configs();
    tc.max_steps = 50;
    let mut cfg = ModelConfig::new(6, VariantSpec::parse("T h - t").unwrap());
    cfg.unit_entities = true;
    let out = train(Model::init(4, 1, &cfg, 0).unwrap(), &store, &loss, &tc).unwrap();
    for e in 0..4 {
        let n: f64 = out.model.entity(e).iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn out_of_range_batch_rejected() {
    let cfg = ModelConfig::new(3, VariantSpec::parse("T h - t").unwrap());
    let model = Model::init(3, 1, &cfg, 0).unwrap();
    let loss = LossConfig {
        negatives: 1,
        ..Default::default()
    };
    assert!(loss_and_grad(&model, &[Triple::new(0, 0, 9)], &[Triple::new(0, 0, 1)], &loss).is_err());
    assert!(loss_and_grad(&model, &[Triple::new(0, 4, 1)], &[Triple::new(0, 4, 2)], &loss).is_err());
}
