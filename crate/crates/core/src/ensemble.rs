//! Ensembles of trained models: weighted distance sums and unsupervised
//! rank fusion.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FilterIndex, RelationType, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::evaluation::{Direction, LinkScorer, Metrics, MetricsReport, RankResult, RelationScorer};
use crate::model::Model;
use crate::optim::{AdamConfig, SparseAdam, SparseRows};
use crate::training::{sample_negatives, self_adversarial_weights, sigmoid, weighted_loss, LossConfig};

/// Uniform weights `1/n`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `λ^i` for the `i`-th best member (1-based), normalized to sum to one.
pub fn geometric_weights(n: usize, ratio: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n as i32).map(|i| ratio.powi(i)).collect();
    normalize(&raw)
}

/// Normalized `exp(θ)`.
pub fn softmax_weights(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = theta.iter().map(|t| (t - max).exp()).collect();
    normalize(&raw)
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Normalized weighted sum of member scores.
pub fn wds_combine(scores: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    scores.iter().zip(weights).map(|(s, w)| s * w).sum::<f64>() / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum WdsScheme {
    Uniform,
    /// Members must be ordered by validation MRR, best first.
    Geometric {
        ratio: f64,
    },
    Learnable(LearnConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// One weight vector per relation instead of a global one.
    #[serde(default)]
    pub per_relation: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 256,
            learning_rate: 0.05,
            seed: 0,
            per_relation: false,
        }
    }
}

/// Weighted-distance-sum ensemble usable anywhere a single model is.
pub struct WdsEnsemble<'a> {
    members: Vec<&'a Model>,
    /// One row per relation, or a single global row.
    weights: Vec<Vec<f64>>,
}

fn check_members(members: &[&Model]) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::Config("an ensemble needs at least two members".into()));
    }
    let (ne, nr) = (members[0].num_entities(), members[0].num_relations());
    if members
        .iter()
        .any(|m| m.num_entities() != ne || m.num_relations() != nr)
    {
        return Err(Error::VocabMismatch(
            "ensemble members disagree on entity or relation counts".into(),
        ));
    }
    Ok(())
}

impl<'a> WdsEnsemble<'a> {
    pub fn with_weights(members: Vec<&'a Model>, weights: Vec<Vec<f64>>) -> Result<Self> {
        check_members(&members)?;
        let rows_ok = weights.len() == 1 || weights.len() == members[0].num_relations();
        if !rows_ok
            || weights
                .iter()
                .any(|w| w.len() != members.len() || w.iter().any(|x| !(*x > 0.0)))
        {
            return Err(Error::Config("WDS weights must be positive, one per member".into()));
        }
        let weights = weights.iter().map(|w| normalize(w)).collect();
        Ok(Self { members, weights })
    }

    /// Builds the ensemble, fitting weights on `store.train` when learnable.
    pub fn new(members: Vec<&'a Model>, scheme: &WdsScheme, store: &TripleStore, loss: &LossConfig) -> Result<Self> {
        check_members(&members)?;
        let n = members.len();
        let weights = match scheme {
            WdsScheme::Uniform => vec![uniform_weights(n)],
            WdsScheme::Geometric { ratio } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::Config(format!("geometric ratio must be in (0, 1), got {ratio}")));
                }
                vec![geometric_weights(n, *ratio)]
            }
            WdsScheme::Learnable(cfg) => learn_weights(&members, store, loss, cfg)?,
        };
        Self::with_weights(members, weights)
    }

    pub fn weights(&self, relation: u32) -> &[f64] {
        if self.weights.len() == 1 {
            &self.weights[0]
        } else {
            &self.weights[relation as usize]
        }
    }

    pub fn score(&self, head: u32, relation: u32, tail: u32) -> Result<f64> {
        let scores = self
            .members
            .iter()
            .map(|m| m.score(head, relation, tail))
            .collect::<Result<Vec<_>>>()?;
        Ok(wds_combine(&scores, self.weights(relation)))
    }
}

struct WdsRelationScorer<'a> {
    members: Vec<Box<dyn RelationScorer + 'a>>,
    weights: Vec<f64>,
}

impl WdsRelationScorer<'_> {
    fn combine(&self, out: &mut [f64], fill: impl Fn(&dyn RelationScorer, &mut [f64])) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; out.len()];
        for (m, w) in self.members.iter().zip(&self.weights) {
            fill(m.as_ref(), &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, s)| *o += w * s);
        }
    }
}

impl RelationScorer for WdsRelationScorer<'_> {
    fn score_tails(&self, head: u32, out: &mut [f64]) {
        self.combine(out, |m, buf| m.score_tails(head, buf))
    }

    fn score_heads(&self, tail: u32, out: &mut [f64]) {
        self.combine(out, |m, buf| m.score_heads(tail, buf))
    }
}

impl LinkScorer for WdsEnsemble<'_> {
    fn num_entities(&self) -> usize {
        self.members[0].num_entities()
    }

    fn num_relations(&self) -> usize {
        self.members[0].num_relations()
    }

    fn relation_scorer(&self, relation: u32) -> Result<Box<dyn RelationScorer + '_>> {
        let members = self
            .members
            .iter()
            .map(|m| m.relation_scorer(relation))
            .collect::<Result<Vec<_>>>()?;
        Ok(Box::new(WdsRelationScorer {
            members,
            weights: self.weights(relation).to_vec(),
        }))
    }
}

/// Fits `w = exp(θ)` with the training loss while members stay frozen.
pub fn learn_weights(
    members: &[&Model],
    store: &TripleStore,
    loss: &LossConfig,
    cfg: &LearnConfig,
) -> Result<Vec<Vec<f64>>> {
    check_members(members)?;
    loss.validate()?;
    if store.train.is_empty() || cfg.batch_size == 0 {
        return Err(Error::Config(
            "learnable weights need training triples and batch size >= 1".into(),
        ));
    }
    let n = members.len();
    let rows = if cfg.per_relation {
        members[0].num_relations()
    } else {
        1
    };
    let row_of = |r: u32| if cfg.per_relation { r } else { 0 };
    let mut theta = vec![0.0; rows * n];
    let mut adam = SparseAdam::new(theta.len(), AdamConfig::with_lr(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_entities = members[0].num_entities();
    let mut order: Vec<usize> = (0..store.train.len()).collect();
    let mut cursor = order.len();
    let bs = cfg.batch_size.min(order.len());

    for step in 1..=cfg.steps as u64 {
        let mut batch = Vec::with_capacity(bs);
        while batch.len() < bs {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(store.train[order[cursor]]);
            cursor += 1;
        }
        let negatives = sample_negatives(&batch, num_entities, loss, &mut rng);
        let member_scores = |ts: &[Triple]| -> Result<Vec<Vec<f64>>> {
            members.iter().map(|m| Ok(m.score_batch(ts)?.scores)).collect()
        };
        let pos = member_scores(&batch)?;
        let neg = member_scores(&negatives)?;
        let mut grad = SparseRows::new(n);
        let inv_b = 1.0 / batch.len() as f64;
        for (i, t) in batch.iter().enumerate() {
            let row = row_of(t.relation) as usize;
            let w = softmax_weights(&theta[row * n..(row + 1) * n]);
            let fuse = |scores: &[Vec<f64>], j: usize| -> (f64, Vec<f64>) {
                let s: Vec<f64> = scores.iter().map(|m| m[j]).collect();
                (wds_combine(&s, &w), s)
            };
            let (f_pos, s_pos) = fuse(&pos, i);
            let negs: Vec<(f64, Vec<f64>)> = (0..loss.negatives)
                .map(|j| fuse(&neg, i * loss.negatives + j))
                .collect();
            let f_neg: Vec<f64> = negs.iter().map(|(f, _)| *f).collect();
            let p = self_adversarial_weights(&f_neg, loss.temperature);
            let value = weighted_loss(f_pos, &f_neg, &p, loss.margin);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { triple: *t });
            }
            let g = grad.row_mut(row as u32);
            // ∂f/∂θ_k = w_k (f_k - f)
            let mut push = |coef: f64, f: f64, s: &[f64]| {
                for k in 0..n {
                    g[k] += coef * w[k] * (s[k] - f);
                }
            };
            push(sigmoid(f_pos - loss.margin) * inv_b, f_pos, &s_pos);
            for ((f, s), pj) in negs.iter().zip(&p) {
                push(-pj * sigmoid(loss.margin - f) * inv_b, *f, s);
            }
        }
        adam.step(&mut theta, &grad, step);
    }
    Ok(theta.chunks(n).map(softmax_weights).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FusionMethod {
    CombMax,
    CombMin,
    CombMedian,
    CombSum,
    Euclidean,
    Borda,
    Rrf,
    Rbc,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 8] = [
        FusionMethod::CombMax,
        FusionMethod::CombMin,
        FusionMethod::CombMedian,
        FusionMethod::CombSum,
        FusionMethod::Euclidean,
        FusionMethod::Borda,
        FusionMethod::Rrf,
        FusionMethod::Rbc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::CombMax => "CombMAX",
            FusionMethod::CombMin => "CombMIN",
            FusionMethod::CombMedian => "CombMEDIAN",
            FusionMethod::CombSum => "CombSUM",
            FusionMethod::Euclidean => "Euclidean",
            FusionMethod::Borda => "Borda",
            FusionMethod::Rrf => "RRF",
            FusionMethod::Rbc => "RBC",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// True when a larger aggregate is better.
    pub fn descending(self) -> bool {
        matches!(self, FusionMethod::Borda | FusionMethod::Rrf | FusionMethod::Rbc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub method: FusionMethod,
    #[serde(default = "default_rrf_k")]
    pub rrf_k: f64,
    #[serde(default = "default_rbc_phi")]
    pub rbc_phi: f64,
}

fn default_rrf_k() -> f64 {
    60.0
}

fn default_rbc_phi() -> f64 {
    0.98
}

impl FusionConfig {
    pub fn new(method: FusionMethod) -> Self {
        Self {
            method,
            rrf_k: default_rrf_k(),
            rbc_phi: default_rbc_phi(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rrf_k > 0.0) {
            return Err(Error::Config(format!("RRF constant must be > 0, got {}", self.rrf_k)));
        }
        if !(self.rbc_phi > 0.0 && self.rbc_phi < 1.0) {
            return Err(Error::Config(format!(
                "RBC persistence must be in (0, 1), got {}",
                self.rbc_phi
            )));
        }
        Ok(())
    }
}

/// Aggregate of one candidate's member ranks (1-based) over `num_candidates`.
pub fn aggregate(cfg: &FusionConfig, ranks: &[usize], num_candidates: usize) -> f64 {
    let r = ranks.iter().map(|&r| r as f64);
    match cfg.method {
        FusionMethod::CombMax => r.fold(f64::NEG_INFINITY, f64::max),
        FusionMethod::CombMin => r.fold(f64::INFINITY, f64::min),
        FusionMethod::CombMedian => {
            let mut v: Vec<f64> = r.collect();
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                (v[m - 1] + v[m]) / 2.0
            }
        }
        FusionMethod::CombSum => r.sum(),
        FusionMethod::Euclidean => r.map(|x| x * x).sum::<f64>().sqrt(),
        FusionMethod::Borda => {
            let e = num_candidates as f64;
            r.map(|x| (e - x + 1.0) / e).sum()
        }
        FusionMethod::Rrf => r.map(|x| 1.0 / (cfg.rrf_k + x)).sum(),
        FusionMethod::Rbc => r.map(|x| (1.0 - cfg.rbc_phi) * cfg.rbc_phi.powf(x - 1.0)).sum(),
    }
}

fn check_rank_lists(rank_lists: &[Vec<usize>]) -> Result<usize> {
    let Some(first) = rank_lists.first() else {
        return Err(Error::Fusion("no rank lists to fuse".into()));
    };
    let c = first.len();
    for (m, list) in rank_lists.iter().enumerate() {
        if list.len() != c {
            return Err(Error::Fusion(format!(
                "member {m} ranks {} candidates, expected {c}",
                list.len()
            )));
        }
        let mut seen = vec![false; c];
        for &r in list {
            if r == 0 || r > c || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::Fusion(format!(
                    "member {m} is not a permutation of ranks 1..={c}"
                )));
            }
        }
    }
    Ok(c)
}

struct Fused {
    value: f64,
    mean_rank: f64,
}

fn fused_keys(rank_lists: &[Vec<usize>], cfg: &FusionConfig, c: usize) -> Vec<Fused> {
    let mut ranks = vec![0usize; rank_lists.len()];
    (0..c)
        .map(|e| {
            for (slot, list) in ranks.iter_mut().zip(rank_lists) {
                *slot = list[e];
            }
            Fused {
                value: aggregate(cfg, &ranks, c),
                mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
            }
        })
        .collect()
}

fn fused_cmp(method: FusionMethod, a: (&Fused, usize), b: (&Fused, usize)) -> Ordering {
    let by_value = if method.descending() {
        b.0.value.total_cmp(&a.0.value)
    } else {
        a.0.value.total_cmp(&b.0.value)
    };
    by_value
        .then(a.0.mean_rank.total_cmp(&b.0.mean_rank))
        .then(a.1.cmp(&b.1))
}

/// Fuses per-member rankings. `rank_lists[m][c]` is member `m`'s 1-based
/// rank of candidate `c`. Returns candidate indices, best first; ties fall
/// back to the mean member rank, then the candidate index.
pub fn fuse_ranks(rank_lists: &[Vec<usize>], cfg: &FusionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let c = check_rank_lists(rank_lists)?;
    let keys = fused_keys(rank_lists, cfg, c);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| fused_cmp(cfg.method, (&keys[a], a), (&keys[b], b)));
    Ok(order)
}

/// 1-based fused rank of one candidate, without sorting everything.
pub fn fused_rank_of(rank_lists: &[Vec<usize>], cfg: &FusionConfig, candidate: usize) -> Result<usize> {
    cfg.validate()?;
    let c = check_rank_lists(rank_lists)?;
    if candidate >= c {
        return Err(Error::Fusion(format!("candidate {candidate} out of range {c}")));
    }
    let keys = fused_keys(rank_lists, cfg, c);
    let target = (&keys[candidate], candidate);
    Ok(1 + (0..c)
        .filter(|&e| fused_cmp(cfg.method, (&keys[e], e), target) == Ordering::Less)
        .count())
}

/// Ranks of the candidates that survive filtering, ordered by score with
/// ties broken by entity id. Returns `(entity ids, ranks)` with `ranks[i]`
/// the 1-based rank of `ids[i]`.
pub fn filtered_rank_list(scores: &[f64], truth: u32, known: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut ids: Vec<u32> = Vec::with_capacity(scores.len());
    let mut k = 0;
    for e in 0..scores.len() as u32 {
        while k < known.len() && known[k] < e {
            k += 1;
        }
        if e != truth && k < known.len() && known[k] == e {
            continue;
        }
        ids.push(e);
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[ids[a] as usize]
            .total_cmp(&scores[ids[b] as usize])
            .then(ids[a].cmp(&ids[b]))
    });
    let mut ranks = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    (ids, ranks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleMethod<'a> {
    Wds(&'a [Vec<f64>]),
    Fusion(FusionConfig),
}

/// Filtered evaluation of a member set under rank fusion.
pub fn fusion_evaluate(
    members: &[&Model],
    cfg: &FusionConfig,
    triples: &[Triple],
    filter: &FilterIndex,
    relation_types: &[RelationType],
) -> Result<MetricsReport> {
    cfg.validate()?;
    if members.is_empty() {
        return Err(Error::Config("fusion needs at least one member".into()));
    }
    if members.len() > 1 {
        check_members(members)?;
    }
    let n = members[0].num_entities();
    let mut by_rel: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, t) in triples.iter().enumerate() {
        by_rel.entry(t.relation).or_default().push(i);
    }
    let mut slots = vec![[0usize; 2]; triples.len()];
    for (relation, idx) in by_rel {
        let scorers = members
            .iter()
            .map(|m| m.relation_scorer(relation))
            .collect::<Result<Vec<_>>>()?;
        let ranks: Vec<(usize, [usize; 2])> = idx
            .par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, &i| {
                    let t = &triples[i];
                    let mut pair = [0; 2];
                    for (slot, dir) in pair.iter_mut().zip([Direction::Head, Direction::Tail]) {
                        let truth = dir.ground_truth(t);
                        let known = dir.known(t, filter);
                        let mut lists = Vec::with_capacity(scorers.len());
                        let mut pos = 0;
                        for s in &scorers {
                            dir.score_into(s.as_ref(), t, buf);
                            let (ids, ranks) = filtered_rank_list(buf, truth, known);
                            pos = ids.binary_search(&truth).expect("truth survives filtering");
                            lists.push(ranks);
                        }
                        *slot = fused_rank_of(&lists, cfg, pos).expect("consistent rank lists");
                    }
                    (i, pair)
                },
            )
            .collect();
        for (i, pair) in ranks {
            slots[i] = pair;
        }
    }
    let results = triples
        .iter()
        .zip(slots)
        .flat_map(|(t, [h, tl])| {
            [
                RankResult {
                    direction: Direction::Head,
                    triple: *t,
                    rank: h,
                },
                RankResult {
                    direction: Direction::Tail,
                    triple: *t,
                    rank: tl,
                },
            ]
        })
        .collect();
    Ok(MetricsReport::from_ranks(results, relation_types))
}

/// Evaluates an ensemble under WDS weights or a fusion method.
pub fn ensemble_evaluate(
    members: &[&Model],
    method: EnsembleMethod<'_>,
    triples: &[Triple],
    filter: &FilterIndex,
    relation_types: &[RelationType],
) -> Result<MetricsReport> {
    match method {
        EnsembleMethod::Wds(weights) => {
            let ens = WdsEnsemble::with_weights(members.to_vec(), weights.to_vec())?;
            crate::evaluation::evaluate(&ens, triples, filter, relation_types)
        }
        EnsembleMethod::Fusion(cfg) => fusion_evaluate(members, &cfg, triples, filter, relation_types),
    }
}

/// `method,mrr,hits1,hits3,hits10` rows, one per ensemble method.
pub fn method_table(rows: &[(String, Metrics)]) -> String {
    let mut out = String::from("method,mrr,hits1,hits3,hits10\n");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            crate::evaluation::csv_field(name),
            m.mrr,
            m.hits1,
            m.hits3,
            m.hits10
        );
    }
    out
}

/// Checkpoints that make up an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<ManifestMember>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub code_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub checkpoint: String,
    pub val_mrr: f64,
    #[serde(default)]
    pub variant: Option<String>,
}

impl EnsembleManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Members by validation MRR, best first; the order geometric weights use.
    pub fn sorted(&self) -> Vec<ManifestMember> {
        let mut m = self.members.clone();
        m.sort_by(|a, b| b.val_mrr.total_cmp(&a.val_mrr));
        m
    }
}
