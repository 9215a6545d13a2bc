//! Filtered-rank link prediction evaluation: MRR, Hits@k and per-relation
//! breakdowns.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FilterIndex, RelationType, Triple, Vocab};
use crate::error::Result;

/// Scores every entity as the missing slot of queries for one relation.
/// Lower is better.
pub trait RelationScorer: Sync {
    /// `out[e] = f_r(head, e)`
    fn score_tails(&self, head: u32, out: &mut [f64]);
    /// `out[e] = f_r(e, tail)`
    fn score_heads(&self, tail: u32, out: &mut [f64]);
}

/// Anything that can rank candidates for link prediction.
pub trait LinkScorer: Sync {
    fn num_entities(&self) -> usize;
    fn num_relations(&self) -> usize;
    fn relation_scorer(&self, relation: u32) -> Result<Box<dyn RelationScorer + '_>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// `(?, r, t)`
    Head,
    /// `(h, r, ?)`
    Tail,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        }
    }

    pub fn ground_truth(self, t: &Triple) -> u32 {
        match self {
            Direction::Head => t.head,
            Direction::Tail => t.tail,
        }
    }

    /// Known true answers for this query, including the ground truth.
    pub fn known<'a>(self, t: &Triple, filter: &'a FilterIndex) -> &'a [u32] {
        match self {
            Direction::Head => filter.heads(t.relation, t.tail),
            Direction::Tail => filter.tails(t.head, t.relation),
        }
    }

    pub fn score_into(self, scorer: &dyn RelationScorer, t: &Triple, out: &mut [f64]) {
        match self {
            Direction::Head => scorer.score_heads(t.tail, out),
            Direction::Tail => scorer.score_tails(t.head, out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub direction: Direction,
    pub triple: Triple,
    pub rank: usize,
}

/// Rank of `truth` among `scores` after dropping every `known` candidate
/// other than `truth`. Ties count half: `1 + better + ⌊ties/2⌋`.
pub fn filtered_rank(scores: &[f64], truth: u32, known: &[u32]) -> usize {
    let target = scores[truth as usize];
    if target.is_nan() {
        return scores.len();
    }
    let (mut better, mut ties) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if i == truth as usize {
            continue;
        }
        if s < target {
            better += 1;
        } else if s == target {
            ties += 1;
        }
    }
    for &k in known {
        if k == truth {
            continue;
        }
        let s = scores[k as usize];
        if s < target {
            better -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    1 + better + ties / 2
}

/// Filtered rank of one query, scoring all candidates from scratch.
pub fn rank_query(
    scorer: &dyn LinkScorer,
    triple: &Triple,
    direction: Direction,
    filter: &FilterIndex,
) -> Result<usize> {
    let rel = scorer.relation_scorer(triple.relation)?;
    let mut scores = vec![0.0; scorer.num_entities()];
    direction.score_into(rel.as_ref(), triple, &mut scores);
    Ok(filtered_rank(
        &scores,
        direction.ground_truth(triple),
        direction.known(triple, filter),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    pub fn from_ranks<I: IntoIterator<Item = usize>>(ranks: I) -> Self {
        let (mut n, mut rr, mut h1, mut h3, mut h10) = (0usize, 0.0, 0usize, 0usize, 0usize);
        for r in ranks {
            n += 1;
            rr += 1.0 / r as f64;
            h1 += usize::from(r <= 1);
            h3 += usize::from(r <= 3);
            h10 += usize::from(r <= 10);
        }
        if n == 0 {
            return Self::default();
        }
        let n_f = n as f64;
        Self {
            count: n,
            mrr: rr / n_f,
            hits1: h1 as f64 / n_f,
            hits3: h3 as f64 / n_f,
            hits10: h10 as f64 / n_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRow {
    pub relation: u32,
    pub relation_type: RelationType,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Metrics,
    pub per_relation: Vec<RelationRow>,
    pub per_type: BTreeMap<RelationType, Metrics>,
    pub ranks: Vec<RankResult>,
}

impl MetricsReport {
    /// Aggregates rank results; `relation_types[r]` labels relation `r`.
    pub fn from_ranks(ranks: Vec<RankResult>, relation_types: &[RelationType]) -> Self {
        let type_of = |r: u32| relation_types.get(r as usize).copied().unwrap_or(RelationType::Unknown);
        let overall = Metrics::from_ranks(ranks.iter().map(|r| r.rank));
        let mut by_rel: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut by_type: BTreeMap<RelationType, Vec<usize>> = BTreeMap::new();
        for r in &ranks {
            by_rel.entry(r.triple.relation).or_default().push(r.rank);
            by_type.entry(type_of(r.triple.relation)).or_default().push(r.rank);
        }
        let per_relation = by_rel
            .into_iter()
            .map(|(relation, rs)| RelationRow {
                relation,
                relation_type: type_of(relation),
                metrics: Metrics::from_ranks(rs),
            })
            .collect();
        let per_type = by_type
            .into_iter()
            .map(|(k, rs)| (k, Metrics::from_ranks(rs)))
            .collect();
        Self {
            overall,
            per_relation,
            per_type,
            ranks,
        }
    }

    pub fn relation(&self, relation: u32) -> Option<&Metrics> {
        self.per_relation
            .iter()
            .find(|r| r.relation == relation)
            .map(|r| &r.metrics)
    }

    /// `key=value` lines: overall metrics, then per type and per relation.
    pub fn render(&self, vocab: Option<&Vocab>) -> String {
        let mut out = String::new();
        let m = &self.overall;
        let _ = writeln!(out, "queries={}", m.count);
        let _ = writeln!(out, "mrr={:.6}", m.mrr);
        let _ = writeln!(out, "hits@1={:.6}", m.hits1);
        let _ = writeln!(out, "hits@3={:.6}", m.hits3);
        let _ = writeln!(out, "hits@10={:.6}", m.hits10);
        for (ty, m) in &self.per_type {
            let _ = writeln!(out, "type.{}.queries={}", ty.label(), m.count);
            let _ = writeln!(out, "type.{}.mrr={:.6}", ty.label(), m.mrr);
        }
        for row in &self.per_relation {
            let name = relation_name(vocab, row.relation);
            let _ = writeln!(out, "relation.{name}.mrr={:.6}", row.metrics.mrr);
        }
        out
    }

    /// One CSV row per relation.
    pub fn relation_csv(&self, vocab: Option<&Vocab>) -> String {
        let mut out = String::from("relation_id,relation,type,queries,mrr,hits1,hits3,hits10\n");
        for row in &self.per_relation {
            let m = &row.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                row.relation,
                csv_field(&relation_name(vocab, row.relation)),
                row.relation_type.label(),
                m.count,
                m.mrr,
                m.hits1,
                m.hits3,
                m.hits10
            );
        }
        out
    }
}

fn relation_name(vocab: Option<&Vocab>, r: u32) -> String {
    vocab
        .and_then(|v| v.relations.name(r))
        .map_or_else(|| r.to_string(), str::to_owned)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

/// Filtered ranks for both directions of every triple, grouped by relation
/// so each relation's candidate table is built once.
pub fn rank_all(scorer: &dyn LinkScorer, triples: &[Triple], filter: &FilterIndex) -> Result<Vec<RankResult>> {
    let n = scorer.num_entities();
    let mut by_rel: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        by_rel.entry(t.relation).or_default().push(i);
    }
    let mut slots: Vec<[usize; 2]> = vec![[0, 0]; triples.len()];
    for (relation, idx) in by_rel {
        let rel = scorer.relation_scorer(relation)?;
        let rel = rel.as_ref();
        let ranks: Vec<(usize, [usize; 2])> = idx
            .par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, &i| {
                    let t = &triples[i];
                    let mut pair = [0; 2];
                    for (slot, dir) in pair.iter_mut().zip([Direction::Head, Direction::Tail]) {
                        dir.score_into(rel, t, buf);
                        *slot = filtered_rank(buf, dir.ground_truth(t), dir.known(t, filter));
                    }
                    (i, pair)
                },
            )
            .collect();
        for (i, pair) in ranks {
            slots[i] = pair;
        }
    }
    Ok(triples
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
        .collect())
}

/// Evaluates both directions of every triple under the filtered setting.
pub fn evaluate(
    scorer: &dyn LinkScorer,
    triples: &[Triple],
    filter: &FilterIndex,
    relation_types: &[RelationType],
) -> Result<MetricsReport> {
    Ok(MetricsReport::from_ranks(
        rank_all(scorer, triples, filter)?,
        relation_types,
    ))
}
