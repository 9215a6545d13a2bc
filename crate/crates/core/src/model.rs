//! Entity tables, per-relation block-diagonal operators and the three
//! distance-based scoring shapes (head-only, tail-only, both sides).

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Triple;
use crate::error::{Error, Result};
use crate::evaluation::{LinkScorer, RelationScorer};
use crate::geometry3d::{CompiledChain, OperatorKind, DEFAULT_NORMAL_EPS};

/// Operator chains applied to the head and tail entity, each in
/// matrix-product order (`[R, S, T]` is `R·S·T·h`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariantSpec {
    head: Vec<OperatorKind>,
    tail: Vec<OperatorKind>,
}

impl VariantSpec {
    pub fn new(head: Vec<OperatorKind>, tail: Vec<OperatorKind>) -> Result<Self> {
        if head.is_empty() && tail.is_empty() {
            return Err(Error::InvalidVariant(
                "both chains are empty; the score would have no relation parameters".into(),
            ));
        }
        if head.iter().chain(&tail).any(|k| *k == OperatorKind::Identity) {
            return Err(Error::InvalidVariant(
                "identity is implicit and cannot appear in a chain".into(),
            ));
        }
        Ok(Self { head, tail })
    }

    pub fn head_only(head: Vec<OperatorKind>) -> Result<Self> {
        Self::new(head, Vec::new())
    }

    pub fn head(&self) -> &[OperatorKind] {
        &self.head
    }

    pub fn tail(&self) -> &[OperatorKind] {
        &self.tail
    }

    pub fn head_params_per_block(&self) -> usize {
        self.head.iter().map(|k| k.parameter_count()).sum()
    }

    pub fn tail_params_per_block(&self) -> usize {
        self.tail.iter().map(|k| k.parameter_count()).sum()
    }

    pub fn params_per_block(&self) -> usize {
        self.head_params_per_block() + self.tail_params_per_block()
    }

    pub fn operator_count(&self) -> usize {
        self.head.len() + self.tail.len()
    }

    /// Parses the textual form, e.g. `"R.S.T h - t"` or `"S h - T.R.S t"`.
    pub fn parse(text: &str) -> Result<Self> {
        VariantParser { text, pos: 0 }.variant()
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chain = |c: &[OperatorKind]| c.iter().map(|k| k.symbol().to_string()).collect::<Vec<_>>().join(".");
        if !self.head.is_empty() {
            write!(f, "{} ", chain(&self.head))?;
        }
        f.write_str("h - ")?;
        if !self.tail.is_empty() {
            write!(f, "{} ", chain(&self.tail))?;
        }
        f.write_str("t")
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl TryFrom<String> for VariantSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<VariantSpec> for String {
    fn from(v: VariantSpec) -> String {
        v.to_string()
    }
}

struct VariantParser<'a> {
    text: &'a str,
    pos: usize,
}

impl VariantParser<'_> {
    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::VariantSyntax {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn op(&mut self) -> Result<OperatorKind> {
        self.skip_ws();
        match self.peek() {
            Some(c @ ('T' | 'S' | 'R' | 'F' | 'H')) => {
                self.bump();
                Ok(OperatorKind::from_symbol(c).expect("operator symbol"))
            }
            Some(c) => self.error(format!("expected one of T, S, R, F, H but found {c:?}")),
            None => self.error("expected an operator but reached the end"),
        }
    }

    /// `chain? entity`, where `entity` is the lowercase letter `which`.
    fn side(&mut self, which: char) -> Result<Vec<OperatorKind>> {
        let mut chain = Vec::new();
        self.skip_ws();
        if self.peek() == Some(which) {
            self.bump();
            return Ok(chain);
        }
        chain.push(self.op()?);
        loop {
            self.skip_ws();
            match self.peek() {
                Some('.') => {
                    self.bump();
                    chain.push(self.op()?);
                }
                Some(c) if c == which => {
                    self.bump();
                    return Ok(chain);
                }
                Some(c) => return self.error(format!("expected '.' or '{which}' but found {c:?}")),
                None => return self.error(format!("expected '{which}' but reached the end")),
            }
        }
    }

    fn variant(mut self) -> Result<VariantSpec> {
        let head = self.side('h')?;
        self.skip_ws();
        match self.bump() {
            Some('-') => {}
            Some(c) => {
                self.pos -= c.len_utf8();
                return self.error(format!("expected '-' but found {c:?}"));
            }
            None => return self.error("expected '-' but reached the end"),
        }
        let tail = self.side('t')?;
        self.skip_ws();
        if self.pos != self.text.len() {
            return self.error("unexpected trailing input");
        }
        VariantSpec::new(head, tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormOrder {
    L1,
    #[default]
    L2,
}

impl NormOrder {
    pub fn from_order(p: u8) -> Result<Self> {
        match p {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            other => Err(Error::Config(format!("norm order must be 1 or 2, got {other}"))),
        }
    }

    pub fn order(self) -> u8 {
        match self {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }

    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            NormOrder::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

/// Total free parameters: `|E|·d + |R|·(d/3)·Σ parameter_count`.
pub fn param_count(variant: &VariantSpec, dim: usize, num_entities: usize, num_relations: usize) -> u64 {
    let blocks = (dim / 3) as u64;
    num_entities as u64 * dim as u64 + num_relations as u64 * blocks * variant.params_per_block() as u64
}

/// Half-width of the uniform entity initialization: `(margin + ε) / d`.
pub fn entity_init_range(margin: f64, epsilon: f64, dim: usize) -> f64 {
    (margin + epsilon) / dim as f64
}

pub const DEFAULT_INIT_EPSILON: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub variant: VariantSpec,
    #[serde(default)]
    pub norm: NormOrder,
    /// Entity entries start uniform in `±(init_margin + init_epsilon)/dim`.
    pub init_margin: f64,
    #[serde(default = "default_init_epsilon")]
    pub init_epsilon: f64,
    /// Keep every entity vector at unit L2 norm.
    #[serde(default)]
    pub unit_entities: bool,
}

fn default_init_epsilon() -> f64 {
    DEFAULT_INIT_EPSILON
}

impl ModelConfig {
    pub fn new(dim: usize, variant: VariantSpec) -> Self {
        Self {
            dim,
            variant,
            norm: NormOrder::L2,
            init_margin: 6.0,
            init_epsilon: DEFAULT_INIT_EPSILON,
            unit_entities: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    variant: VariantSpec,
    dim: usize,
    norm: NormOrder,
    unit_entities: bool,
    num_entities: usize,
    num_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub triples: Vec<Triple>,
    pub scores: Vec<f64>,
}

impl Model {
    pub fn init(num_entities: usize, num_relations: usize, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || !cfg.dim.is_multiple_of(3) {
            return Err(Error::Dimension(cfg.dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let range = entity_init_range(cfg.init_margin, cfg.init_epsilon, cfg.dim);
        let entities: Vec<f64> = (0..num_entities * cfg.dim)
            .map(|_| rng.gen_range(-range..=range))
            .collect();
        let blocks = cfg.dim / 3;
        let mut relations = Vec::with_capacity(num_relations * blocks * cfg.variant.params_per_block());
        for _ in 0..num_relations * blocks {
            for &kind in cfg.variant.head.iter().chain(&cfg.variant.tail) {
                init_operator(kind, &mut rng, &mut relations);
            }
        }
        let mut model = Self {
            variant: cfg.variant.clone(),
            dim: cfg.dim,
            norm: cfg.norm,
            unit_entities: cfg.unit_entities,
            num_entities,
            num_relations,
            entities,
            relations,
        };
        if model.unit_entities {
            for e in 0..num_entities {
                model.normalize_entity(e);
            }
        }
        Ok(model)
    }

    /// Assembles a model from raw tables, validating their shapes.
    pub fn from_parts(
        variant: VariantSpec,
        dim: usize,
        norm: NormOrder,
        num_entities: usize,
        num_relations: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(3) {
            return Err(Error::Dimension(dim));
        }
        let rel_len = num_relations * (dim / 3) * variant.params_per_block();
        if entities.len() != num_entities * dim || relations.len() != rel_len {
            return Err(Error::Checkpoint(format!(
                "table sizes {}/{} do not match shape {}x{} and {} relation params",
                entities.len(),
                relations.len(),
                num_entities,
                dim,
                rel_len
            )));
        }
        Ok(Self {
            variant,
            dim,
            norm,
            unit_entities: false,
            num_entities,
            num_relations,
            entities,
            relations,
        })
    }

    pub fn variant(&self) -> &VariantSpec {
        &self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> usize {
        self.dim / 3
    }

    pub fn norm(&self) -> NormOrder {
        self.norm
    }

    pub fn set_norm(&mut self, norm: NormOrder) {
        self.norm = norm;
    }

    pub fn unit_entities(&self) -> bool {
        self.unit_entities
    }

    pub fn set_unit_entities(&mut self, on: bool) {
        self.unit_entities = on;
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn relation_params_per_relation(&self) -> usize {
        self.blocks() * self.variant.params_per_block()
    }

    pub fn param_count(&self) -> u64 {
        param_count(&self.variant, self.dim, self.num_entities, self.num_relations)
    }

    pub fn entity_table(&self) -> &[f64] {
        &self.entities
    }

    pub fn entity_table_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relation_table(&self) -> &[f64] {
        &self.relations
    }

    pub fn relation_table_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    pub fn entity(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.entities[i..i + self.dim]
    }

    pub fn entity_mut(&mut self, id: u32) -> &mut [f64] {
        let i = id as usize * self.dim;
        &mut self.entities[i..i + self.dim]
    }

    pub fn relation_params(&self, id: u32) -> &[f64] {
        let n = self.relation_params_per_relation();
        let i = id as usize * n;
        &self.relations[i..i + n]
    }

    pub fn relation_params_mut(&mut self, id: u32) -> &mut [f64] {
        let n = self.relation_params_per_relation();
        let i = id as usize * n;
        &mut self.relations[i..i + n]
    }

    /// Parameters of one block of one relation: head chain then tail chain.
    pub fn block_params(&self, relation: u32, block: usize) -> &[f64] {
        let per = self.variant.params_per_block();
        let base = relation as usize * self.relation_params_per_relation() + block * per;
        &self.relations[base..base + per]
    }

    pub fn block_params_mut(&mut self, relation: u32, block: usize) -> &mut [f64] {
        let per = self.variant.params_per_block();
        let base = relation as usize * self.relation_params_per_relation() + block * per;
        &mut self.relations[base..base + per]
    }

    pub(crate) fn normalize_entity(&mut self, id: usize) {
        let row = &mut self.entities[id * self.dim..(id + 1) * self.dim];
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }

    fn check_entity(&self, id: u32) -> Result<()> {
        if id as usize >= self.num_entities {
            return Err(Error::IdOutOfRange {
                what: "entity",
                id: id as usize,
                size: self.num_entities,
            });
        }
        Ok(())
    }

    fn check_relation(&self, id: u32) -> Result<()> {
        if id as usize >= self.num_relations {
            return Err(Error::IdOutOfRange {
                what: "relation",
                id: id as usize,
                size: self.num_relations,
            });
        }
        Ok(())
    }

    fn check_triple(&self, t: &Triple) -> Result<()> {
        self.check_entity(t.head)?;
        self.check_relation(t.relation)?;
        self.check_entity(t.tail)
    }

    /// Builds the per-block composite operators of one relation.
    pub fn compile_relation(&self, relation: u32, with_jacobians: bool) -> Result<CompiledRelation> {
        self.check_relation(relation)?;
        let hp = self.variant.head_params_per_block();
        let blocks = self.blocks();
        let mut head = Vec::with_capacity(blocks);
        let mut tail = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let p = self.block_params(relation, b);
            head.push(CompiledChain::new(
                &self.variant.head,
                &p[..hp],
                DEFAULT_NORMAL_EPS,
                with_jacobians,
            )?);
            tail.push(CompiledChain::new(
                &self.variant.tail,
                &p[hp..],
                DEFAULT_NORMAL_EPS,
                with_jacobians,
            )?);
        }
        Ok(CompiledRelation {
            head_identity: self.variant.head.is_empty(),
            tail_identity: self.variant.tail.is_empty(),
            head,
            tail,
        })
    }

    pub fn score(&self, head: u32, relation: u32, tail: u32) -> Result<f64> {
        let t = Triple::new(head, relation, tail);
        self.check_triple(&t)?;
        let rel = self.compile_relation(relation, false)?;
        Ok(rel.score(self.norm, self.entity(head), self.entity(tail)))
    }

    pub fn score_batch(&self, triples: &[Triple]) -> Result<ScoreBatch> {
        for t in triples {
            self.check_triple(t)?;
        }
        let mut compiled: Vec<Option<CompiledRelation>> = vec![None; self.num_relations];
        let mut scores = Vec::with_capacity(triples.len());
        for t in triples {
            let slot = &mut compiled[t.relation as usize];
            if slot.is_none() {
                *slot = Some(self.compile_relation(t.relation, false)?);
            }
            let rel = slot.as_ref().expect("compiled above");
            scores.push(rel.score(self.norm, self.entity(t.head), self.entity(t.tail)));
        }
        Ok(ScoreBatch {
            triples: triples.to_vec(),
            scores,
        })
    }

    /// Scores `(head, relation, e)` for every entity `e`.
    pub fn score_all_tails(&self, head: u32, relation: u32) -> Result<Vec<f64>> {
        self.check_entity(head)?;
        let rel = self.compile_relation(relation, false)?;
        let mut query = vec![0.0; self.dim];
        rel.transform_head(self.entity(head), &mut query);
        let mut cand = vec![0.0; self.dim];
        Ok((0..self.num_entities as u32)
            .map(|e| {
                rel.transform_tail(self.entity(e), &mut cand);
                self.norm.distance(&query, &cand)
            })
            .collect())
    }

    /// Scores `(e, relation, tail)` for every entity `e`.
    pub fn score_all_heads(&self, relation: u32, tail: u32) -> Result<Vec<f64>> {
        self.check_entity(tail)?;
        let rel = self.compile_relation(relation, false)?;
        let mut query = vec![0.0; self.dim];
        rel.transform_tail(self.entity(tail), &mut query);
        let mut cand = vec![0.0; self.dim];
        Ok((0..self.num_entities as u32)
            .map(|e| {
                rel.transform_head(self.entity(e), &mut cand);
                self.norm.distance(&cand, &query)
            })
            .collect())
    }

    /// Applies the full entity table through one side of a relation.
    fn transformed_table(&self, rel: &CompiledRelation, head_side: bool) -> Cow<'_, [f64]> {
        let identity = if head_side {
            rel.head_identity
        } else {
            rel.tail_identity
        };
        if identity {
            return Cow::Borrowed(&self.entities);
        }
        let mut out = vec![0.0; self.entities.len()];
        out.par_chunks_mut(self.dim)
            .zip(self.entities.par_chunks(self.dim))
            .for_each(|(dst, src)| {
                if head_side {
                    rel.transform_head(src, dst)
                } else {
                    rel.transform_tail(src, dst)
                }
            });
        Cow::Owned(out)
    }
}

fn init_operator(kind: OperatorKind, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    match kind {
        OperatorKind::Translation => out.extend([0.0; 3]),
        OperatorKind::Scaling => out.extend([1.0; 3]),
        OperatorKind::Rotation => out.extend((0..3).map(|_| rng.gen_range(-PI..=PI))),
        OperatorKind::Reflection => loop {
            // rejection sampling from the unit ball gives a uniform direction
            let v: [f64; 3] = [
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
            ];
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                out.extend(v.iter().map(|x| x / n));
                break;
            }
        },
        OperatorKind::Shear => out.extend([0.0; 6]),
        OperatorKind::Identity => {}
    }
}

/// Per-block composite operators for one relation.
#[derive(Debug, Clone)]
pub struct CompiledRelation {
    pub(crate) head: Vec<CompiledChain>,
    pub(crate) tail: Vec<CompiledChain>,
    pub(crate) head_identity: bool,
    pub(crate) tail_identity: bool,
}

fn transform(chains: &[CompiledChain], identity: bool, x: &[f64], out: &mut [f64]) {
    if identity {
        out.copy_from_slice(x);
        return;
    }
    for ((chain, src), dst) in chains.iter().zip(x.chunks_exact(3)).zip(out.chunks_exact_mut(3)) {
        let y = chain.apply(&[src[0], src[1], src[2]]);
        dst.copy_from_slice(&y);
    }
}

impl CompiledRelation {
    pub fn head_chains(&self) -> &[CompiledChain] {
        &self.head
    }

    pub fn tail_chains(&self) -> &[CompiledChain] {
        &self.tail
    }

    /// `M_r·x`, block by block.
    pub fn transform_head(&self, x: &[f64], out: &mut [f64]) {
        transform(&self.head, self.head_identity, x, out)
    }

    /// `M̂_r·x`, block by block.
    pub fn transform_tail(&self, x: &[f64], out: &mut [f64]) {
        transform(&self.tail, self.tail_identity, x, out)
    }

    pub fn score(&self, norm: NormOrder, head: &[f64], tail: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (b, (h, t)) in head.chunks_exact(3).zip(tail.chunks_exact(3)).enumerate() {
            let yh = self.head[b].apply(&[h[0], h[1], h[2]]);
            let yt = self.tail[b].apply(&[t[0], t[1], t[2]]);
            for k in 0..3 {
                let d = yh[k] - yt[k];
                acc += match norm {
                    NormOrder::L1 => d.abs(),
                    NormOrder::L2 => d * d,
                };
            }
        }
        match norm {
            NormOrder::L1 => acc,
            NormOrder::L2 => acc.sqrt(),
        }
    }
}

/// A relation's entity table pushed through both sides once, so ranking
/// all candidates reduces to distance computations.
pub struct ModelRelationScorer<'a> {
    dim: usize,
    norm: NormOrder,
    heads: Cow<'a, [f64]>,
    tails: Cow<'a, [f64]>,
}

impl RelationScorer for ModelRelationScorer<'_> {
    fn score_tails(&self, head: u32, out: &mut [f64]) {
        let h = head as usize * self.dim;
        let query = &self.heads[h..h + self.dim];
        for (o, cand) in out.iter_mut().zip(self.tails.chunks_exact(self.dim)) {
            *o = self.norm.distance(query, cand);
        }
    }

    fn score_heads(&self, tail: u32, out: &mut [f64]) {
        let t = tail as usize * self.dim;
        let query = &self.tails[t..t + self.dim];
        for (o, cand) in out.iter_mut().zip(self.heads.chunks_exact(self.dim)) {
            *o = self.norm.distance(cand, query);
        }
    }
}

impl LinkScorer for Model {
    fn num_entities(&self) -> usize {
        self.num_entities
    }

    fn num_relations(&self) -> usize {
        self.num_relations
    }

    fn relation_scorer(&self, relation: u32) -> Result<Box<dyn RelationScorer + '_>> {
        let rel = self.compile_relation(relation, false)?;
        Ok(Box::new(ModelRelationScorer {
            dim: self.dim,
            norm: self.norm,
            heads: self.transformed_table(&rel, true),
            tails: self.transformed_table(&rel, false),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;
    use OperatorKind::*;

    fn v(text: &str) -> VariantSpec {
        VariantSpec::parse(text).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(v("T h - t"), VariantSpec::new(vec![Translation], vec![]).unwrap());
        assert_eq!(
            v("S h - T.R.S t"),
            VariantSpec::new(vec![Scaling], vec![Translation, Rotation, Scaling]).unwrap()
        );
        assert_eq!(v("R.S.T h - t").head(), &[Rotation, Scaling, Translation]);
        assert_eq!(v("  h-H t ").tail(), &[Shear]);
    }

    #[test]
    fn parse_rejects_degenerate_and_garbage() {
        assert!(matches!(VariantSpec::parse("h - t"), Err(Error::InvalidVariant(_))));
        match VariantSpec::parse("R.X h - t") {
            Err(Error::VariantSyntax { position, .. }) => assert_eq!(position, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(VariantSpec::parse("R h + t").is_err());
        assert!(VariantSpec::parse("R h - t extra").is_err());
        assert!(VariantSpec::parse("R. h - t").is_err());
        assert!(VariantSpec::parse("I h - t").is_err());
    }

    #[test]
    fn render_forms() {
        assert_eq!(v("R.S.T h - t").to_string(), "R.S.T h - t");
        assert_eq!(v("h - T.R.S t").to_string(), "h - T.R.S t");
        assert_eq!(v("S h-S t").to_string(), "S h - S t");
    }

    #[test]
    fn init_rejects_bad_dim_and_is_deterministic() {
        let cfg = ModelConfig::new(4, v("T h - t"));
        assert!(matches!(Model::init(3, 1, &cfg, 0), Err(Error::Dimension(4))));
        let cfg = ModelConfig::new(6, v("R.F.H h - S t"));
        let a = Model::init(5, 2, &cfg, 11).unwrap();
        let b = Model::init(5, 2, &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(a
            .entity_table()
            .iter()
            .zip(b.entity_table())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = Model::init(5, 2, &cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_starts_at_neutral_operators() {
        let cfg = ModelConfig::new(3, v("T.S.H h - t"));
        let m = Model::init(2, 1, &cfg, 3).unwrap();
        assert_eq!(
            m.block_params(0, 0),
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let range = entity_init_range(6.0, 2.0, 3);
        assert!(m.entity_table().iter().all(|x| x.abs() <= range));
    }

    #[test]
    fn relation_parameter_count_for_wn18rr_shape() {
        let cfg = ModelConfig::new(480, v("R.S.T h - t"));
        let m = Model::init(4, 11, &cfg, 0).unwrap();
        assert_eq!(m.relation_params_per_relation(), 1440);
    }

    #[test]
    fn param_count_examples() {
        assert_eq!(param_count(&v("T h - t"), 3, 2, 1), 9);
        assert_eq!(v("T.S.R.F.H h - t").params_per_block(), 18);
    }

    #[test]
    fn zero_translation_scores_zero_on_equal_entities() {
        let cfg = ModelConfig::new(6, v("T h - t"));
        let mut m = Model::init(2, 1, &cfg, 0).unwrap();
        let h = m.entity(0).to_vec();
        m.entity_mut(1).copy_from_slice(&h);
        assert_eq!(m.score(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn head_scaling_matches_doubled_tail() {
        let cfg = ModelConfig::new(6, v("S h - t"));
        let mut m = Model::init(2, 1, &cfg, 0).unwrap();
        m.relation_params_mut(0).iter_mut().for_each(|x| *x = 2.0);
        let h = m.entity(0).to_vec();
        m.entity_mut(1).iter_mut().zip(&h).for_each(|(t, x)| *t = 2.0 * x);
        assert_eq!(m.score(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn yaw_maps_x_axis_to_y_axis() {
        let cfg = ModelConfig::new(3, v("R h - t"));
        let mut m = Model::init(2, 1, &cfg, 0).unwrap();
        m.relation_params_mut(0).copy_from_slice(&[FRAC_PI_2, 0.0, 0.0]);
        m.entity_mut(0).copy_from_slice(&[1.0, 0.0, 0.0]);
        m.entity_mut(1).copy_from_slice(&[0.0, 1.0, 0.0]);
        assert!(m.score(0, 0, 1).unwrap() < 1e-15);
    }

    #[test]
    fn out_of_range_ids() {
        let cfg = ModelConfig::new(3, v("T h - t"));
        let m = Model::init(2, 1, &cfg, 0).unwrap();
        assert!(matches!(
            m.score(2, 0, 0),
            Err(Error::IdOutOfRange { what: "entity", .. })
        ));
        assert!(matches!(
            m.score(0, 1, 0),
            Err(Error::IdOutOfRange { what: "relation", .. })
        ));
        assert!(m.score_all_tails(0, 5).is_err());
    }

    #[test]
    fn batch_and_all_candidates_agree_with_single_scores() {
        let cfg = ModelConfig::new(6, v("R.S h - F.T t"));
        let m = Model::init(5, 2, &cfg, 9).unwrap();
        let one = m.score_batch(&[Triple::new(1, 1, 3)]).unwrap();
        assert_eq!(one.scores[0], m.score(1, 1, 3).unwrap());
        let tails = m.score_all_tails(2, 0).unwrap();
        let heads = m.score_all_heads(1, 4).unwrap();
        for e in 0..5u32 {
            assert!((tails[e as usize] - m.score(2, 0, e).unwrap()).abs() < 1e-12);
            assert!((heads[e as usize] - m.score(e, 1, 4).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_norm_option() {
        let mut cfg = ModelConfig::new(3, v("T h - t"));
        cfg.norm = NormOrder::L1;
        let mut m = Model::init(2, 1, &cfg, 0).unwrap();
        m.entity_mut(0).copy_from_slice(&[0.0, 0.0, 0.0]);
        m.entity_mut(1).copy_from_slice(&[1.0, -2.0, 2.0]);
        assert_eq!(m.score(0, 0, 1).unwrap(), 5.0);
        m.set_norm(NormOrder::L2);
        assert_eq!(m.score(0, 0, 1).unwrap(), 3.0);
    }

    #[test]
    fn unit_entities_are_normalized_at_init() {
        let mut cfg = ModelConfig::new(6, v("R h - t"));
        cfg.unit_entities = true;
        let m = Model::init(4, 1, &cfg, 1).unwrap();
        for e in 0..4 {
            let n: f64 = m.entity(e).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
