//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use compound3d::data::Triple;
use compound3d::ensemble::FusionMethod;
use compound3d::evaluation::Direction;
use compound3d::geometry3d::{OpParams, OperatorKind};
use compound3d::model::{Model, ModelConfig, NormOrder, VariantSpec};
use compound3d::training::{loss_and_grad, self_adversarial_weights, weighted_loss, CorruptionMode, LossConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M4 = [[f64; 4]; 4];

pub fn m4_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn m4_eye() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn m4_diff(a: &M4, b: &M4) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[i][j] - b[i][j]).abs());
        }
    }
    d
}

/// Textbook homogeneous matrices, written out independently of the library.
pub fn homogeneous(p: &OpParams) -> M4 {
    let v = &p.values;
    let mut m = m4_eye();
    match p.kind {
        OperatorKind::Identity => {}
        OperatorKind::Translation => {
            m[0][3] = v[0];
            m[1][3] = v[1];
            m[2][3] = v[2];
        }
        OperatorKind::Scaling => {
            m[0][0] = v[0];
            m[1][1] = v[1];
            m[2][2] = v[2];
        }
        OperatorKind::Rotation => {
            let (a, b, g) = (v[0], v[1], v[2]);
            let mut rz = m4_eye();
            rz[0][0] = a.cos();
            rz[0][1] = -a.sin();
            rz[1][0] = a.sin();
            rz[1][1] = a.cos();
            let mut ry = m4_eye();
            ry[0][0] = b.cos();
            ry[0][2] = b.sin();
            ry[2][0] = -b.sin();
            ry[2][2] = b.cos();
            let mut rx = m4_eye();
            rx[1][1] = g.cos();
            rx[1][2] = -g.sin();
            rx[2][1] = g.sin();
            rx[2][2] = g.cos();
            m = m4_mul(&m4_mul(&rz, &ry), &rx);
        }
        OperatorKind::Reflection => {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let u = [v[0] / n, v[1] / n, v[2] / n];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] -= 2.0 * u[i] * u[j];
                }
            }
        }
        OperatorKind::Shear => {
            // parameter order: y_x, z_x, x_y, z_y, x_z, y_z
            let mut yz = m4_eye();
            yz[1][0] = v[2];
            yz[2][0] = v[4];
            let mut xz = m4_eye();
            xz[0][1] = v[0];
            xz[2][1] = v[5];
            let mut xy = m4_eye();
            xy[0][2] = v[1];
            xy[1][2] = v[3];
            m = m4_mul(&m4_mul(&yz, &xz), &xy);
        }
    }
    m
}

/// Rank by scoring each surviving candidate one triple at a time.
pub fn brute_rank(model: &Model, t: &Triple, dir: Direction, all: &[Triple]) -> usize {
    let n = model.num_entities() as u32;
    let truth_score = model.score(t.head, t.relation, t.tail).unwrap();
    let (mut better, mut ties) = (0, 0);
    for e in 0..n {
        let cand = match dir {
            Direction::Head => Triple::new(e, t.relation, t.tail),
            Direction::Tail => Triple::new(t.head, t.relation, e),
        };
        if cand == *t || all.contains(&cand) {
            continue;
        }
        let s = model.score(cand.head, cand.relation, cand.tail).unwrap();
        if s < truth_score {
            better += 1;
        } else if s == truth_score {
            ties += 1;
        }
    }
    1 + better + ties / 2
}

pub fn brute_fusion_value(method: FusionMethod, ranks: &[usize], c: usize, k: f64, phi: f64) -> f64 {
    let r: Vec<f64> = ranks.iter().map(|&x| x as f64).collect();
    match method {
        FusionMethod::CombMax => r.iter().cloned().fold(0.0, f64::max),
        FusionMethod::CombMin => r.iter().cloned().fold(f64::MAX, f64::min),
        FusionMethod::CombMedian => {
            let mut s = r.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                (s[n / 2 - 1] + s[n / 2]) / 2.0
            }
        }
        FusionMethod::CombSum => r.iter().sum(),
        FusionMethod::Euclidean => r.iter().map(|x| x * x).sum::<f64>().sqrt(),
        FusionMethod::Borda => r.iter().map(|x| (c as f64 - x + 1.0) / c as f64).sum(),
        FusionMethod::Rrf => r.iter().map(|x| 1.0 / (k + x)).sum(),
        FusionMethod::Rbc => r.iter().map(|x| (1.0 - phi) * phi.powf(x - 1.0)).sum(),
    }
}

/// Orders candidates by a full sort on (value, mean rank, id).
pub fn brute_fuse(lists: &[Vec<usize>], method: FusionMethod) -> Vec<usize> {
    let c = lists[0].len();
    let mut rows: Vec<(f64, f64, usize)> = (0..c)
        .map(|e| {
            let ranks: Vec<usize> = lists.iter().map(|l| l[e]).collect();
            let v = brute_fusion_value(method, &ranks, c, 60.0, 0.98);
            let key = if method.descending() { -v } else { v };
            (key, ranks.iter().sum::<usize>() as f64 / ranks.len() as f64, e)
        })
        .collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rows.into_iter().map(|r| r.2).collect()
}

/// Between one and five permutations of `1..=c` with `c <= 20`.
pub fn random_rank_lists(rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let n = rng.gen_range(1..=5);
    let c = rng.gen_range(1..=20);
    (0..n)
        .map(|_| {
            let mut l: Vec<usize> = (1..=c).collect();
            l.shuffle(rng);
            l
        })
        .collect()
}

/// Batch-mean loss with the negative weights held at `frozen`.
fn frozen_loss(model: &Model, batch: &[Triple], negs: &[Triple], frozen: &[Vec<f64>], cfg: &LossConfig) -> f64 {
    let n = cfg.negatives;
    let mut total = 0.0;
    for (i, pos) in batch.iter().enumerate() {
        let fp = model.score(pos.head, pos.relation, pos.tail).unwrap();
        let fn_: Vec<f64> = negs[i * n..(i + 1) * n]
            .iter()
            .map(|t| model.score(t.head, t.relation, t.tail).unwrap())
            .collect();
        total += weighted_loss(fp, &fn_, &frozen[i], cfg.margin);
    }
    total / batch.len() as f64
}

fn weights_at(model: &Model, batch: &[Triple], negs: &[Triple], cfg: &LossConfig) -> Vec<Vec<f64>> {
    let n = cfg.negatives;
    (0..batch.len())
        .map(|i| {
            let s: Vec<f64> = negs[i * n..(i + 1) * n]
                .iter()
                .map(|t| model.score(t.head, t.relation, t.tail).unwrap())
                .collect();
            self_adversarial_weights(&s, cfg.temperature)
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between analytic gradients and central finite
/// differences of the frozen-weight loss, over every parameter of a small
/// randomly perturbed model.
pub fn max_gradient_error(variant: &str, norm: NormOrder, temperature: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mcfg = ModelConfig::new(6, VariantSpec::parse(variant).unwrap());
    mcfg.norm = norm;
    let mut model = Model::init(6, 2, &mcfg, seed).unwrap();
    // move operators away from their neutral starting values
    for x in model.relation_table_mut() {
        *x += rng.gen_range(-0.5..0.5);
    }
    let cfg = LossConfig {
        margin: 2.0,
        temperature,
        negatives: 3,
        corruption: CorruptionMode::Both,
    };
    let batch: Vec<Triple> = (0..4)
        .map(|_| Triple::new(rng.gen_range(0..6), rng.gen_range(0..2), rng.gen_range(0..6)))
        .collect();
    let negs: Vec<Triple> = batch
        .iter()
        .flat_map(|t| {
            let mut out = Vec::new();
            for _ in 0..3 {
                out.push(Triple::new(rng.gen_range(0..6), t.relation, rng.gen_range(0..6)));
            }
            out
        })
        .collect();
    let (_, grads) = loss_and_grad(&model, &batch, &negs, &cfg).unwrap();
    let frozen = weights_at(&model, &batch, &negs, &cfg);
    let h = 1e-6;
    let mut worst: f64 = 0.0;

    let ent_len = model.entity_table().len();
    let rel_len = model.relation_table().len();
    for idx in 0..ent_len + rel_len {
        let bump = |m: &mut Model, delta: f64| {
            if idx < ent_len {
                m.entity_table_mut()[idx] += delta;
            } else {
                m.relation_table_mut()[idx - ent_len] += delta;
            }
        };
        let mut plus = model.clone();
        bump(&mut plus, h);
        let mut minus = model.clone();
        bump(&mut minus, -h);
        let numeric = (frozen_loss(&plus, &batch, &negs, &frozen, &cfg)
            - frozen_loss(&minus, &batch, &negs, &frozen, &cfg))
            / (2.0 * h);
        let analytic = if idx < ent_len {
            let (row, col) = (idx / 6, idx % 6);
            grads.entities.get(row as u32).map_or(0.0, |g| g[col])
        } else {
            let w = model.relation_params_per_relation();
            let (row, col) = ((idx - ent_len) / w, (idx - ent_len) % w);
            grads.relations.get(row as u32).map_or(0.0, |g| g[col])
        };
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}
