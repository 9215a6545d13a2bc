//! Self-adversarial negative sampling loss, its analytic gradient and the
//! minibatch Adam training loop.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FilterIndex, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::geometry3d::{mat_t_vec, CompiledChain};
use crate::model::{CompiledRelation, Model, NormOrder};
use crate::optim::{AdamConfig, SparseAdam, SparseRows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CorruptionMode {
    Head,
    Tail,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Margin ζ in score units.
    pub margin: f64,
    /// Softmax temperature α of the self-adversarial weights.
    pub temperature: f64,
    /// Negatives per positive.
    pub negatives: usize,
    #[serde(default)]
    pub corruption: CorruptionMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 6.0,
            temperature: 1.0,
            negatives: 256,
            corruption: CorruptionMode::Both,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.negatives == 0 {
            return Err(Error::Config("need at least one negative per positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    /// Validate every this many steps; 0 disables validation.
    pub eval_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Use at most this many validation triples per evaluation.
    #[serde(default)]
    pub valid_limit: Option<usize>,
    /// Emit a loss record every this many steps; 0 means only with validation.
    #[serde(default)]
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            max_steps: 1000,
            eval_every: 0,
            seed: 0,
            adam: AdamConfig::default(),
            valid_limit: None,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

const MAX_RESAMPLE: usize = 16;

fn corrupt_head(rng: &mut impl Rng, mode: CorruptionMode) -> bool {
    match mode {
        CorruptionMode::Head => true,
        CorruptionMode::Tail => false,
        CorruptionMode::Both => rng.gen_bool(0.5),
    }
}

fn draw_other(rng: &mut impl Rng, num_entities: usize, avoid: u32) -> u32 {
    let mut e = rng.gen_range(0..num_entities as u32);
    for _ in 0..MAX_RESAMPLE {
        if e != avoid {
            break;
        }
        e = rng.gen_range(0..num_entities as u32);
    }
    e
}

/// `negatives` corruptions per positive, grouped positive by positive.
/// Under `Both`, each negative independently replaces the head or the tail
/// with probability one half.
pub fn sample_negatives(batch: &[Triple], num_entities: usize, cfg: &LossConfig, rng: &mut impl Rng) -> Vec<Triple> {
    let mut out = Vec::with_capacity(batch.len() * cfg.negatives);
    for t in batch {
        for _ in 0..cfg.negatives {
            if corrupt_head(rng, cfg.corruption) {
                out.push(Triple::new(draw_other(rng, num_entities, t.head), t.relation, t.tail));
            } else {
                out.push(Triple::new(t.head, t.relation, draw_other(rng, num_entities, t.tail)));
            }
        }
    }
    out
}

/// Softmax of `temperature · score` over the negatives of one positive.
pub fn self_adversarial_weights(neg_scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = neg_scores
        .iter()
        .map(|s| temperature * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = neg_scores.iter().map(|s| (temperature * s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln(1 + eˣ)`, i.e. `-log σ(-x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss of one positive with given (detached) negative weights:
/// `-log σ(ζ - f⁺) - Σ pᵢ log σ(fᵢ⁻ - ζ)`.
pub fn weighted_loss(pos_score: f64, neg_scores: &[f64], weights: &[f64], margin: f64) -> f64 {
    softplus(pos_score - margin)
        + neg_scores
            .iter()
            .zip(weights)
            .map(|(s, p)| p * softplus(margin - s))
            .sum::<f64>()
}

/// Gradients of the batch loss with respect to touched parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: SparseRows,
    pub relations: SparseRows,
}

/// Per block and side: `Σ g·xᵀ` (9 values) followed by `Σ g` (3 values).
const MOMENT_WIDTH: usize = 12;

struct ChunkGrad {
    loss: f64,
    entities: SparseRows,
    /// Moment sums, `[block][head, tail][MOMENT_WIDTH]` per relation row.
    moments: SparseRows,
}

struct BatchContext<'a> {
    model: &'a Model,
    compiled: HashMap<u32, CompiledRelation>,
    cfg: &'a LossConfig,
    inv_batch: f64,
}

impl BatchContext<'_> {
    fn score(&self, t: &Triple) -> f64 {
        self.compiled[&t.relation].score(self.model.norm(), self.model.entity(t.head), self.model.entity(t.tail))
    }

    /// Backpropagates `coef · ∂f/∂θ` for one triple.
    fn backward(&self, t: &Triple, coef: f64, acc: &mut ChunkGrad) {
        let m = self.model;
        let rel = &self.compiled[&t.relation];
        let dim = m.dim();
        let (h, tl) = (m.entity(t.head), m.entity(t.tail));
        let mut diff = vec![0.0; dim];
        let mut yh = vec![0.0; dim];
        let mut yt = vec![0.0; dim];
        rel.transform_head(h, &mut yh);
        rel.transform_tail(tl, &mut yt);
        for k in 0..dim {
            diff[k] = yh[k] - yt[k];
        }
        match m.norm() {
            NormOrder::L2 => {
                let f = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                let scale = if f > 0.0 { coef / f } else { 0.0 };
                diff.iter_mut().for_each(|d| *d *= scale);
            }
            NormOrder::L1 => diff.iter_mut().for_each(|d| *d = coef * sign(*d)),
        }
        let g = diff;
        {
            let row = acc.entities.row_mut(t.head);
            side_backward(&rel.head, rel.head_identity, &g, 1.0, row);
        }
        {
            let row = acc.entities.row_mut(t.tail);
            side_backward(&rel.tail, rel.tail_identity, &g, -1.0, row);
        }
        let moments = acc.moments.row_mut(t.relation);
        for b in 0..m.blocks() {
            let gb = [g[3 * b], g[3 * b + 1], g[3 * b + 2]];
            if !rel.head_identity {
                add_moment(
                    &mut moments[(2 * b) * MOMENT_WIDTH..(2 * b + 1) * MOMENT_WIDTH],
                    &gb,
                    &h[3 * b..3 * b + 3],
                    1.0,
                );
            }
            if !rel.tail_identity {
                add_moment(
                    &mut moments[(2 * b + 1) * MOMENT_WIDTH..(2 * b + 2) * MOMENT_WIDTH],
                    &gb,
                    &tl[3 * b..3 * b + 3],
                    -1.0,
                );
            }
        }
    }

    fn chunk(&self, positives: &[Triple], negatives: &[Triple]) -> Result<ChunkGrad> {
        let n = self.cfg.negatives;
        let m = self.model;
        let mut acc = ChunkGrad {
            loss: 0.0,
            entities: SparseRows::new(m.dim()),
            moments: SparseRows::new(m.blocks() * 2 * MOMENT_WIDTH),
        };
        let mut neg_scores = vec![0.0; n];
        for (i, pos) in positives.iter().enumerate() {
            let negs = &negatives[i * n..(i + 1) * n];
            let f_pos = self.score(pos);
            for (s, t) in neg_scores.iter_mut().zip(negs) {
                *s = self.score(t);
            }
            let weights = self_adversarial_weights(&neg_scores, self.cfg.temperature);
            let loss = weighted_loss(f_pos, &neg_scores, &weights, self.cfg.margin);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { triple: *pos });
            }
            acc.loss += loss;
            self.backward(pos, sigmoid(f_pos - self.cfg.margin) * self.inv_batch, &mut acc);
            for ((t, s), p) in negs.iter().zip(&neg_scores).zip(&weights) {
                let coef = -p * sigmoid(self.cfg.margin - s) * self.inv_batch;
                if coef != 0.0 {
                    self.backward(t, coef, &mut acc);
                }
            }
        }
        Ok(acc)
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn side_backward(chains: &[CompiledChain], identity: bool, g: &[f64], side: f64, out: &mut [f64]) {
    if identity {
        out.iter_mut().zip(g).for_each(|(o, gi)| *o += side * gi);
        return;
    }
    for (b, chain) in chains.iter().enumerate() {
        let gb = [side * g[3 * b], side * g[3 * b + 1], side * g[3 * b + 2]];
        let back = mat_t_vec(&chain.composite().linear, &gb);
        for k in 0..3 {
            out[3 * b + k] += back[k];
        }
    }
}

fn add_moment(slot: &mut [f64], g: &[f64; 3], x: &[f64], side: f64) {
    for a in 0..3 {
        let ga = side * g[a];
        for b in 0..3 {
            slot[3 * a + b] += ga * x[b];
        }
        slot[9 + a] += ga;
    }
}

/// Positives processed per parallel work item. Fixed so the reduction
/// order, and therefore the result, does not depend on the thread count.
const CHUNK: usize = 16;

/// Batch-mean loss and analytic gradients. Negatives are laid out as
/// `negatives[i·N..(i+1)·N]` for positive `i`; the self-adversarial weights
/// are treated as constants.
pub fn loss_and_grad(
    model: &Model,
    batch: &[Triple],
    negatives: &[Triple],
    cfg: &LossConfig,
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    if negatives.len() != batch.len() * cfg.negatives {
        return Err(Error::Config(format!(
            "expected {} negatives for {} positives, got {}",
            batch.len() * cfg.negatives,
            batch.len(),
            negatives.len()
        )));
    }
    let mut compiled = HashMap::new();
    for t in batch.iter().chain(negatives) {
        for (what, id, size) in [
            ("entity", t.head as usize, model.num_entities()),
            ("entity", t.tail as usize, model.num_entities()),
        ] {
            if id >= size {
                return Err(Error::IdOutOfRange { what, id, size });
            }
        }
        if let std::collections::hash_map::Entry::Vacant(v) = compiled.entry(t.relation) {
            v.insert(model.compile_relation(t.relation, true)?);
        }
    }
    let ctx = BatchContext {
        model,
        compiled,
        cfg,
        inv_batch: 1.0 / batch.len().max(1) as f64,
    };
    let n = cfg.negatives;
    let parts: Vec<Result<ChunkGrad>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, pos)| {
            let start = c * CHUNK * n;
            ctx.chunk(pos, &negatives[start..start + pos.len() * n])
        })
        .collect();

    let mut loss = 0.0;
    let mut entities = SparseRows::new(model.dim());
    let mut moments = SparseRows::new(model.blocks() * 2 * MOMENT_WIDTH);
    for part in parts {
        let part = part?;
        loss += part.loss;
        entities.merge(&part.entities);
        moments.merge(&part.moments);
    }

    let mut relations = SparseRows::new(model.relation_params_per_relation());
    let per_block = model.variant().params_per_block();
    let head_len = model.variant().head_params_per_block();
    for (r, mom) in moments.iter() {
        let rel = &ctx.compiled[&r];
        let row = relations.row_mut(r);
        for b in 0..model.blocks() {
            let grad = &mut row[b * per_block..(b + 1) * per_block];
            let (gh, gt) = grad.split_at_mut(head_len);
            for (side, chains, out) in [(0, &rel.head, gh), (1, &rel.tail, gt)] {
                if out.is_empty() {
                    continue;
                }
                let s = &mom[(2 * b + side) * MOMENT_WIDTH..(2 * b + side + 1) * MOMENT_WIDTH];
                let outer = [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]];
                chains[b].accumulate_param_grad(&outer, &[s[9], s[10], s[11]], out);
            }
        }
    }
    Ok((loss * ctx.inv_batch, Gradients { entities, relations }))
}

/// Adam state for both parameter tables of a model.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    entities: SparseAdam,
    relations: SparseAdam,
}

impl OptimizerState {
    pub fn new(model: &Model, cfg: AdamConfig) -> Self {
        Self {
            step: 0,
            entities: SparseAdam::new(model.entity_table().len(), cfg),
            relations: SparseAdam::new(model.relation_table().len(), cfg),
        }
    }

    pub fn apply(&mut self, model: &mut Model, grads: &Gradients) {
        self.step += 1;
        self.entities.step(model.entity_table_mut(), &grads.entities, self.step);
        self.relations
            .step(model.relation_table_mut(), &grads.relations, self.step);
        if model.unit_entities() {
            for &e in grads.entities.ids() {
                model.normalize_entity(e as usize);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    /// Mean training loss since the previous record.
    pub loss: f64,
    pub val_mrr: Option<f64>,
    pub wall_secs: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} loss={:.6}", self.step, self.loss)?;
        match self.val_mrr {
            Some(m) => write!(f, " val_mrr={m:.6}")?,
            None => write!(f, " val_mrr=-")?,
        }
        write!(f, " wall={:.3}", self.wall_secs)
    }
}

#[derive(Debug, Clone)]
pub struct BestSnapshot {
    pub step: usize,
    pub val_mrr: f64,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRecord>,
    /// Per-step batch losses.
    pub losses: Vec<f64>,
    pub best: Option<BestSnapshot>,
}

impl TrainOutcome {
    /// The best-validation model if validation ran, else the final one.
    pub fn into_best(self) -> Model {
        match self.best {
            Some(b) => b.model,
            None => self.model,
        }
    }
}

/// Filtered MRR over (at most `limit` of) the given triples.
pub fn validation_mrr(model: &Model, triples: &[Triple], filter: &FilterIndex, limit: Option<usize>) -> Result<f64> {
    let take = limit.map_or(triples.len(), |l| l.min(triples.len()));
    let report = evaluate(model, &triples[..take], filter, &[])?;
    Ok(report.overall.mrr)
}

/// Minibatch training; `observer` sees each log record as it is produced.
pub fn train_with_observer(
    mut model: Model,
    store: &TripleStore,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    loss_cfg.validate()?;
    train_cfg.validate()?;
    store.validate(model.num_entities(), model.num_relations())?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut opt = OptimizerState::new(&model, train_cfg.adam);
    let mut order: Vec<usize> = (0..store.train.len()).collect();
    let mut cursor = order.len();
    let validating = train_cfg.eval_every > 0 && !store.valid.is_empty();
    let filter = if validating {
        Some(FilterIndex::build(store))
    } else {
        None
    };

    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(train_cfg.max_steps);
    let mut best: Option<BestSnapshot> = None;
    let (mut window_loss, mut window_len) = (0.0, 0usize);
    let bs = train_cfg.batch_size.min(store.train.len());
    let mut batch = Vec::with_capacity(bs);

    for step in 1..=train_cfg.max_steps {
        batch.clear();
        while batch.len() < bs {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(store.train[order[cursor]]);
            cursor += 1;
        }
        let negatives = sample_negatives(&batch, model.num_entities(), loss_cfg, &mut rng);
        let (loss, grads) = loss_and_grad(&model, &batch, &negatives, loss_cfg)?;
        opt.apply(&mut model, &grads);
        losses.push(loss);
        window_loss += loss;
        window_len += 1;

        let eval_now = validating && step % train_cfg.eval_every == 0;
        let log_now = train_cfg.log_every > 0 && step % train_cfg.log_every == 0;
        if eval_now || log_now {
            let val_mrr = match (&filter, eval_now) {
                (Some(f), true) => Some(validation_mrr(&model, &store.valid, f, train_cfg.valid_limit)?),
                _ => None,
            };
            if let Some(mrr) = val_mrr {
                if best.as_ref().is_none_or(|b| mrr > b.val_mrr) {
                    best = Some(BestSnapshot {
                        step,
                        val_mrr: mrr,
                        model: model.clone(),
                    });
                }
            }
            let rec = LogRecord {
                step,
                loss: window_loss / window_len as f64,
                val_mrr,
                wall_secs: started.elapsed().as_secs_f64(),
            };
            observer(&rec);
            log.push(rec);
            window_loss = 0.0;
            window_len = 0;
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        losses,
        best,
    })
}

pub fn train(
    model: Model,
    store: &TripleStore,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(model, store, loss_cfg, train_cfg, &mut |_| {})
}
