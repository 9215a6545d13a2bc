//! Stage-wise beam search over operator-chain variants.
//!
//! Stage 1 trains every single operator pair. Each later stage extends the
//! current frontier by every pair, trains the children from scratch and
//! keeps the best `k`. Extensions left-multiply, so the new operator is the
//! last one applied.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointHeader};
use crate::data::{FilterIndex, TripleStore, VocabFingerprint};
use crate::error::{Error, Result};
use crate::geometry3d::OperatorKind;
use crate::model::{param_count, Model, ModelConfig, VariantSpec};
use crate::training::{train, validation_mrr, LossConfig, TrainConfig};

/// One way of applying an operator at a stage: to the head only, to the
/// tail only, or the same kind to both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorPair {
    head: OperatorKind,
    tail: OperatorKind,
}

impl OperatorPair {
    pub fn new(head: OperatorKind, tail: OperatorKind) -> Result<Self> {
        use OperatorKind::Identity;
        match (head, tail) {
            (Identity, Identity) => Err(Error::InvalidVariant("operator pair applies nothing".into())),
            (h, t) if h != Identity && t != Identity && h != t => Err(Error::InvalidVariant(format!(
                "mixed pair ({}, {}) is not allowed",
                h.symbol(),
                t.symbol()
            ))),
            _ => Ok(Self { head, tail }),
        }
    }

    pub fn head(&self) -> OperatorKind {
        self.head
    }

    pub fn tail(&self) -> OperatorKind {
        self.tail
    }

    /// The stage-1 variant made of this pair alone.
    pub fn to_variant(&self) -> VariantSpec {
        let side = |k: OperatorKind| if k == OperatorKind::Identity { vec![] } else { vec![k] };
        VariantSpec::new(side(self.head), side(self.tail)).expect("pair applies at least one operator")
    }
}

impl fmt::Display for OperatorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.head.symbol(), self.tail.symbol())
    }
}

/// All 15 pairs: head-only, tail-only, then both sides, each in kind order.
pub fn enumerate_pairs() -> Vec<OperatorPair> {
    use OperatorKind::Identity;
    let mut out = Vec::with_capacity(15);
    out.extend(OperatorKind::ALL.iter().map(|&k| OperatorPair {
        head: k,
        tail: Identity,
    }));
    out.extend(OperatorKind::ALL.iter().map(|&k| OperatorPair {
        head: Identity,
        tail: k,
    }));
    out.extend(OperatorKind::ALL.iter().map(|&k| OperatorPair { head: k, tail: k }));
    out
}

/// Left-multiplies the pair onto `base`; `None` is the empty variant.
pub fn extend_variant(base: Option<&VariantSpec>, pair: OperatorPair) -> VariantSpec {
    let Some(base) = base else {
        return pair.to_variant();
    };
    let grow = |op: OperatorKind, chain: &[OperatorKind]| {
        let mut out = Vec::with_capacity(chain.len() + 1);
        if op != OperatorKind::Identity {
            out.push(op);
        }
        out.extend_from_slice(chain);
        out
    };
    VariantSpec::new(grow(pair.head, base.head()), grow(pair.tail, base.tail())).expect("extension of a valid variant")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Frontier size `k`.
    pub beam_width: usize,
    /// Training steps per candidate `l`.
    pub iterations: usize,
    /// Cap `λ` on the number of operator pairs in a variant.
    pub max_operators: usize,
    /// Stop once the best ΔMRR/ΔParam of a stage drops below `γ`.
    pub gamma: f64,
    pub max_stages: usize,
    /// Initialize children from their parent's trained parameters.
    #[serde(default)]
    pub warm_start: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: 3,
            iterations: 2000,
            max_operators: 4,
            gamma: 1e-7,
            max_stages: 8,
            warm_start: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.iterations == 0 || self.max_operators == 0 || self.max_stages == 0 {
            return Err(Error::Config(
                "beam width, iterations, operator cap and stage cap must all be >= 1".into(),
            ));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One trained (or failed) candidate of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub variant: VariantSpec,
    pub stage: usize,
    pub parent: Option<VariantSpec>,
    /// Number of operator pairs applied, which equals the stage.
    pub operators: usize,
    pub params: u64,
    /// Validation MRR; `None` when training failed.
    pub mrr: Option<f64>,
    /// Relative to the parent; stage-1 candidates are measured against an
    /// entity-only model with MRR 0.
    pub delta_mrr: Option<f64>,
    pub delta_param: i64,
    pub seed: u64,
    pub wall_secs: f64,
    /// Best validation MRR over all records up to and including this one.
    pub best_so_far: f64,
    #[serde(default)]
    pub checkpoint: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

impl CandidateRecord {
    pub fn efficiency(&self) -> Option<f64> {
        self.delta_mrr.map(|d| d / self.delta_param as f64)
    }
}

/// Selection order: higher MRR, then fewer parameters, then fewer
/// tail-side operators, then kind order of the head chain and the tail
/// chain. `Less` means `a` is preferred.
pub fn compare_candidates(
    a_mrr: f64,
    a_params: u64,
    a: &VariantSpec,
    b_mrr: f64,
    b_params: u64,
    b: &VariantSpec,
) -> Ordering {
    b_mrr
        .total_cmp(&a_mrr)
        .then(a_params.cmp(&b_params))
        .then(a.tail().len().cmp(&b.tail().len()))
        .then_with(|| a.head().cmp(b.head()))
        .then_with(|| a.tail().cmp(b.tail()))
}

fn record_order(a: &CandidateRecord, b: &CandidateRecord) -> Ordering {
    compare_candidates(
        a.mrr.unwrap_or(f64::NEG_INFINITY),
        a.params,
        &a.variant,
        b.mrr.unwrap_or(f64::NEG_INFINITY),
        b.params,
        &b.variant,
    )
}

/// Recomputes the final answer from a log: the best successful record.
pub fn replay(records: &[CandidateRecord]) -> Option<&CandidateRecord> {
    records
        .iter()
        .filter(|r| r.mrr.is_some())
        .min_by(|a, b| record_order(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    OperatorCap,
    Efficiency,
    StageCap,
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: CandidateRecord,
    pub records: Vec<CandidateRecord>,
    /// Frontier kept after each stage, best first.
    pub frontiers: Vec<Vec<VariantSpec>>,
    pub stop: StopReason,
}

impl SearchOutcome {
    /// Best member of the last frontier, logged next to the global best.
    pub fn final_frontier_best(&self) -> Option<&VariantSpec> {
        self.frontiers.last().and_then(|f| f.first())
    }
}

pub struct TrainedCandidate {
    pub mrr: f64,
    pub model: Model,
    pub checkpoint: Option<String>,
}

/// Trains one candidate variant and reports its validation MRR.
pub trait CandidateTrainer {
    fn param_count(&self, variant: &VariantSpec) -> u64;
    /// Parameter count of the entity table alone.
    fn base_param_count(&self) -> u64;
    fn seed(&self) -> u64;
    /// Trains `variant` for `steps` optimizer steps, optionally starting
    /// from the parent's parameters.
    fn train_candidate(
        &mut self,
        variant: &VariantSpec,
        parent: Option<&Model>,
        steps: usize,
    ) -> Result<TrainedCandidate>;
}

/// Where the dataset trainer writes one checkpoint per candidate.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub vocab: VocabFingerprint,
    pub config_hash: String,
}

/// Trains candidates on a triple store and scores them on its validation split.
pub struct DatasetTrainer<'a> {
    pub store: &'a TripleStore,
    pub filter: FilterIndex,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Dimension, norm and initialization shared by all candidates; the
    /// variant is replaced per candidate.
    pub model: ModelConfig,
    pub loss: LossConfig,
    /// `max_steps` is overridden by the search iteration budget.
    pub train: TrainConfig,
    pub valid_limit: Option<usize>,
    pub checkpoints: Option<CheckpointSink>,
}

impl<'a> DatasetTrainer<'a> {
    pub fn new(
        store: &'a TripleStore,
        num_entities: usize,
        num_relations: usize,
        model: ModelConfig,
        loss: LossConfig,
        train: TrainConfig,
    ) -> Self {
        Self {
            filter: FilterIndex::build(store),
            store,
            num_entities,
            num_relations,
            model,
            loss,
            train,
            valid_limit: None,
            checkpoints: None,
        }
    }
}

/// Copies entity rows and the parent's chain parameters into the child.
/// The parent's chains are suffixes of the child's, so each block's
/// parameters land after the newly prepended operator's.
pub fn warm_start_from(child: &mut Model, parent: &Model) -> Result<()> {
    if child.dim() != parent.dim() || child.num_entities() != parent.num_entities() {
        return Err(Error::Config(
            "warm start needs matching dimension and entity count".into(),
        ));
    }
    let (cv, pv) = (child.variant().clone(), parent.variant().clone());
    if !cv.head().ends_with(pv.head()) || !cv.tail().ends_with(pv.tail()) {
        return Err(Error::Config(format!("{pv} is not a parent of {cv}")));
    }
    child.entity_table_mut().copy_from_slice(parent.entity_table());
    let new_head: usize = cv.head()[..cv.head().len() - pv.head().len()]
        .iter()
        .map(|k| k.parameter_count())
        .sum();
    let new_tail: usize = cv.tail()[..cv.tail().len() - pv.tail().len()]
        .iter()
        .map(|k| k.parameter_count())
        .sum();
    let (php, ptp) = (pv.head_params_per_block(), pv.tail_params_per_block());
    let chp = cv.head_params_per_block();
    for r in 0..child.num_relations() as u32 {
        for b in 0..child.blocks() {
            let src = parent.block_params(r, b).to_vec();
            let dst = child.block_params_mut(r, b);
            dst[new_head..new_head + php].copy_from_slice(&src[..php]);
            dst[chp + new_tail..chp + new_tail + ptp].copy_from_slice(&src[php..]);
        }
    }
    Ok(())
}

impl CandidateTrainer for DatasetTrainer<'_> {
    fn param_count(&self, variant: &VariantSpec) -> u64 {
        param_count(variant, self.model.dim, self.num_entities, self.num_relations)
    }

    fn base_param_count(&self) -> u64 {
        (self.num_entities * self.model.dim) as u64
    }

    fn seed(&self) -> u64 {
        self.train.seed
    }

    fn train_candidate(
        &mut self,
        variant: &VariantSpec,
        parent: Option<&Model>,
        steps: usize,
    ) -> Result<TrainedCandidate> {
        let mut cfg = self.model.clone();
        cfg.variant = variant.clone();
        let mut model = Model::init(self.num_entities, self.num_relations, &cfg, self.train.seed)?;
        if let Some(p) = parent {
            warm_start_from(&mut model, p)?;
        }
        let tc = TrainConfig {
            max_steps: steps,
            ..self.train
        };
        let outcome = train(model, self.store, &self.loss, &tc)?;
        let model = outcome.into_best();
        let mrr = validation_mrr(&model, &self.store.valid, &self.filter, self.valid_limit)?;
        let checkpoint = match &self.checkpoints {
            Some(sink) => {
                let name = variant.to_string().replace([' ', '.'], "").replace('-', "_");
                let path = sink.dir.join(format!("{name}.ckpt"));
                let mut header = CheckpointHeader::for_model(&model, sink.vocab.clone(), sink.config_hash.clone());
                header.val_mrr = Some(mrr);
                checkpoint::save(&path, &header, &model)?;
                Some(path.display().to_string())
            }
            None => None,
        };
        Ok(TrainedCandidate { mrr, model, checkpoint })
    }
}

struct Pending {
    variant: VariantSpec,
    parent: Option<usize>,
}

/// Runs the search, handing every record to `observer` as soon as it exists.
pub fn beam_search_with_observer(
    trainer: &mut dyn CandidateTrainer,
    cfg: &SearchConfig,
    observer: &mut dyn FnMut(&CandidateRecord),
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let pairs = enumerate_pairs();
    let mut records: Vec<CandidateRecord> = Vec::new();
    // trained models of the current frontier, indexed like `records`
    let mut models: Vec<Option<Model>> = Vec::new();
    let mut seen: HashSet<VariantSpec> = HashSet::new();
    let mut frontiers = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    let mut best_so_far = f64::NEG_INFINITY;
    let mut stage = 1;

    let stop = loop {
        let pending: Vec<Pending> = if stage == 1 {
            pairs
                .iter()
                .map(|p| Pending {
                    variant: p.to_variant(),
                    parent: None,
                })
                .collect()
        } else {
            let mut out = Vec::new();
            for &parent in &frontier {
                for &p in &pairs {
                    out.push(Pending {
                        variant: extend_variant(Some(&records[parent].variant), p),
                        parent: Some(parent),
                    });
                }
            }
            out
        };
        let pending: Vec<Pending> = pending.into_iter().filter(|p| seen.insert(p.variant.clone())).collect();
        if pending.is_empty() {
            break StopReason::Exhausted;
        }

        let mut stage_ids = Vec::new();
        for p in pending {
            let started = Instant::now();
            let params = trainer.param_count(&p.variant);
            let (parent_mrr, parent_params) = match p.parent {
                Some(i) => (records[i].mrr.unwrap_or(0.0), records[i].params),
                None => (0.0, trainer.base_param_count()),
            };
            let parent_model = match (cfg.warm_start, p.parent) {
                (true, Some(i)) => models[i].as_ref(),
                _ => None,
            };
            let result = trainer.train_candidate(&p.variant, parent_model, cfg.iterations);
            let mut rec = CandidateRecord {
                variant: p.variant,
                stage,
                parent: p.parent.map(|i| records[i].variant.clone()),
                operators: stage,
                params,
                mrr: None,
                delta_mrr: None,
                delta_param: params as i64 - parent_params as i64,
                seed: trainer.seed(),
                wall_secs: 0.0,
                best_so_far,
                checkpoint: None,
                error: None,
            };
            let model = match result {
                Ok(t) => {
                    rec.mrr = Some(t.mrr);
                    rec.delta_mrr = Some(t.mrr - parent_mrr);
                    rec.checkpoint = t.checkpoint;
                    best_so_far = best_so_far.max(t.mrr);
                    rec.best_so_far = best_so_far;
                    stage_ids.push(records.len());
                    Some(t.model)
                }
                Err(e) => {
                    rec.error = Some(e.to_string());
                    None
                }
            };
            rec.wall_secs = started.elapsed().as_secs_f64();
            observer(&rec);
            records.push(rec);
            models.push(model);
        }
        if stage_ids.is_empty() {
            return Err(Error::Search(format!(
                "every candidate of stage {stage} failed to train"
            )));
        }

        stage_ids.sort_by(|&a, &b| record_order(&records[a], &records[b]));
        stage_ids.truncate(cfg.beam_width);
        for (i, m) in models.iter_mut().enumerate() {
            if !stage_ids.contains(&i) {
                *m = None;
            }
        }
        frontiers.push(stage_ids.iter().map(|&i| records[i].variant.clone()).collect());
        let efficiency = records
            .iter()
            .filter(|r| r.stage == stage)
            .filter_map(|r| r.efficiency())
            .fold(f64::NEG_INFINITY, f64::max);
        frontier = stage_ids;

        if stage + 1 > cfg.max_operators {
            break StopReason::OperatorCap;
        }
        if efficiency < cfg.gamma {
            break StopReason::Efficiency;
        }
        if stage >= cfg.max_stages {
            break StopReason::StageCap;
        }
        stage += 1;
    };

    let best = replay(&records).cloned().expect("at least one trained candidate");
    Ok(SearchOutcome {
        best,
        records,
        frontiers,
        stop,
    })
}

pub fn beam_search(trainer: &mut dyn CandidateTrainer, cfg: &SearchConfig) -> Result<SearchOutcome> {
    beam_search_with_observer(trainer, cfg, &mut |_| {})
}

/// Appends one JSON line per record.
pub fn write_log(out: &mut impl Write, records: &[CandidateRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("writing search log", e))?;
    }
    Ok(())
}

/// Reads records written by [`write_log`]; blank lines and `#` comment
/// lines are skipped.
pub fn read_log(input: impl BufRead) -> Result<Vec<CandidateRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("reading search log", e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperatorKind::*;

    fn v(s: &str) -> VariantSpec {
        VariantSpec::parse(s).unwrap()
    }

    #[test]
    fn fifteen_pairs() {
        let pairs = enumerate_pairs();
        assert_eq!(pairs.len(), 15);
        assert!(pairs.contains(&OperatorPair::new(Translation, Identity).unwrap()));
        assert!(pairs.contains(&OperatorPair::new(Identity, Translation).unwrap()));
        assert!(pairs
            .iter()
            .all(|p| p.head() == Identity || p.tail() == Identity || p.head() == p.tail()));
        let distinct: HashSet<_> = pairs.iter().collect();
        assert_eq!(distinct.len(), 15);
    }

    #[test]
    fn invalid_pairs_rejected() {
        assert!(OperatorPair::new(Identity, Identity).is_err());
        assert!(OperatorPair::new(Translation, Scaling).is_err());
    }

    #[test]
    fn extension_prepends() {
        let ss = OperatorPair::new(Scaling, Scaling).unwrap();
        assert_eq!(extend_variant(Some(&v("R h - t")), ss), v("S.R h - S t"));
        let t = OperatorPair::new(Translation, Identity).unwrap();
        assert_eq!(extend_variant(None, t), v("T h - t"));
    }

    #[test]
    fn ordering_prefers_mrr_then_size_then_head_side() {
        let a = v("T.S h - t");
        let b = v("S h - T t");
        assert_eq!(compare_candidates(0.9, 10, &a, 0.8, 10, &b), Ordering::Less);
        assert_eq!(compare_candidates(0.9, 12, &a, 0.9, 10, &b), Ordering::Greater);
        assert_eq!(compare_candidates(0.9, 10, &a, 0.9, 10, &b), Ordering::Less);
        assert_eq!(
            compare_candidates(0.9, 10, &v("T.S h - t"), 0.9, 10, &v("S.T h - t")),
            Ordering::Less
        );
    }

    /// Scores variants by a fixed table, so the search logic can be checked
    /// without training.
    struct TableTrainer {
        calls: Vec<VariantSpec>,
        fail: Option<VariantSpec>,
    }

    impl TableTrainer {
        fn mrr(v: &VariantSpec) -> f64 {
            let has = |k| v.head().contains(&k);
            let mut m = 0.1;
            if has(Scaling) {
                m += 0.3;
            }
            if has(Translation) {
                m += 0.3;
            }
            m - 0.01 * v.tail().len() as f64 - 0.001 * v.operator_count() as f64
        }
    }

    impl CandidateTrainer for TableTrainer {
        fn param_count(&self, v: &VariantSpec) -> u64 {
            param_count(v, 3, 10, 2)
        }
        fn base_param_count(&self) -> u64 {
            30
        }
        fn seed(&self) -> u64 {
            7
        }
        fn train_candidate(
            &mut self,
            v: &VariantSpec,
            _parent: Option<&Model>,
            _steps: usize,
        ) -> Result<TrainedCandidate> {
            self.calls.push(v.clone());
            if self.fail.as_ref() == Some(v) {
                return Err(Error::Search("boom".into()));
            }
            let cfg = ModelConfig::new(3, v.clone());
            Ok(TrainedCandidate {
                mrr: Self::mrr(v),
                model: Model::init(10, 2, &cfg, 0)?,
                checkpoint: None,
            })
        }
    }

    fn table() -> TableTrainer {
        TableTrainer {
            calls: vec![],
            fail: None,
        }
    }

    #[test]
    fn operator_cap_of_one_stops_after_stage_one() {
        let mut t = table();
        let cfg = SearchConfig {
            max_operators: 1,
            beam_width: 15,
            ..Default::default()
        };
        let out = beam_search(&mut t, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::OperatorCap);
        assert_eq!(out.records.len(), 15);
        assert_eq!(out.frontiers[0].len(), 15);
        let mrrs: Vec<f64> = out.frontiers[0].iter().map(TableTrainer::mrr).collect();
        assert!(mrrs.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(out.best.operators, 1);
    }

    #[test]
    fn search_finds_scale_and_translate_and_respects_budget() {
        let mut t = table();
        let cfg = SearchConfig {
            max_operators: 3,
            ..Default::default()
        };
        let out = beam_search(&mut t, &cfg).unwrap();
        assert!(out.best.variant.head().contains(&Scaling) && out.best.variant.head().contains(&Translation));
        assert!(out.records.iter().all(|r| r.operators <= 3));
        let best: Vec<f64> = out.records.iter().map(|r| r.best_so_far).collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
        for r in &out.records {
            let parent = r.parent.as_ref().map_or(30, |p| t.param_count(p));
            assert_eq!(r.delta_param, t.param_count(&r.variant) as i64 - parent as i64);
            assert!(r.delta_param > 0);
        }
        // no variant is trained twice
        let distinct: HashSet<_> = t.calls.iter().collect();
        assert_eq!(distinct.len(), t.calls.len());
        assert_eq!(replay(&out.records).unwrap(), &out.best);
    }

    #[test]
    fn failures_are_logged_and_dropped() {
        let mut t = table();
        t.fail = Some(v("S h - t"));
        let cfg = SearchConfig {
            max_operators: 1,
            ..Default::default()
        };
        let out = beam_search(&mut t, &cfg).unwrap();
        let failed = out.records.iter().find(|r| r.variant == v("S h - t")).unwrap();
        assert!(failed.mrr.is_none() && failed.error.is_some());
        assert!(!out.frontiers[0].contains(&v("S h - t")));
    }

    #[test]
    fn log_round_trip() {
        let mut t = table();
        let out = beam_search(
            &mut t,
            &SearchConfig {
                max_operators: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, &out.records).unwrap();
        let back = read_log(&buf[..]).unwrap();
        assert_eq!(back, out.records);
        assert_eq!(replay(&back).unwrap().variant, out.best.variant);
    }

    #[test]
    fn warm_start_copies_parent_suffix() {
        let parent_cfg = ModelConfig::new(3, v("R h - S t"));
        let parent = Model::init(4, 1, &parent_cfg, 1).unwrap();
        let child_cfg = ModelConfig::new(3, v("T.R h - F.S t"));
        let mut child = Model::init(4, 1, &child_cfg, 2).unwrap();
        warm_start_from(&mut child, &parent).unwrap();
        let p = parent.block_params(0, 0);
        let c = child.block_params(0, 0);
        assert_eq!(&c[3..6], &p[..3]);
        assert_eq!(&c[9..12], &p[3..6]);
        assert_eq!(child.entity_table(), parent.entity_table());
        let unrelated = Model::init(4, 1, &ModelConfig::new(3, v("H h - t")), 0).unwrap();
        assert!(warm_start_from(&mut child, &unrelated).is_err());
    }
}
