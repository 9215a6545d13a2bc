//! Small generated knowledge graphs with known structure, for tests,
//! demos and sanity runs.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Interner, Triple, TripleStore, Vocab};

/// Moves up to `valid + test` triples out of `triples` while every entity
/// and relation keeps at least one training triple.
pub fn split_keeping_coverage(triples: Vec<Triple>, valid: usize, test: usize, rng: &mut impl Rng) -> TripleStore {
    let mut pool = triples;
    pool.shuffle(rng);
    let mut ent_deg: HashMap<u32, usize> = HashMap::new();
    let mut rel_deg: HashMap<u32, usize> = HashMap::new();
    for t in &pool {
        *ent_deg.entry(t.head).or_default() += 1;
        *ent_deg.entry(t.tail).or_default() += 1;
        *rel_deg.entry(t.relation).or_default() += 1;
    }
    let mut store = TripleStore::default();
    for t in pool {
        let removable =
            ent_deg[&t.head] > 1 + usize::from(t.head == t.tail) && ent_deg[&t.tail] > 1 && rel_deg[&t.relation] > 1;
        let held = if !removable {
            None
        } else if store.valid.len() < valid {
            Some(&mut store.valid)
        } else if store.test.len() < test {
            Some(&mut store.test)
        } else {
            None
        };
        match held {
            Some(split) => {
                split.push(t);
                *ent_deg.get_mut(&t.head).expect("counted") -= 1;
                *ent_deg.get_mut(&t.tail).expect("counted") -= 1;
                *rel_deg.get_mut(&t.relation).expect("counted") -= 1;
            }
            None => store.train.push(t),
        }
    }
    store
}

fn dataset(num_entities: usize, relations: &[String], store: TripleStore) -> Dataset {
    let entities = Interner::from_names((0..num_entities).map(|i| format!("e{i}"))).expect("distinct names");
    let relations = Interner::from_names(relations.iter().cloned()).expect("distinct names");
    Dataset {
        vocab: Vocab { entities, relations },
        store,
    }
}

/// An integer line `0..num_entities` with relations `t = scale·h + shift`.
#[derive(Debug, Clone)]
pub struct AffineLineConfig {
    pub num_entities: usize,
    /// `(scale, shift)` per relation.
    pub relations: Vec<(i64, i64)>,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for AffineLineConfig {
    fn default() -> Self {
        Self {
            num_entities: 64,
            relations: vec![(1, 1), (2, 0), (2, 1), (1, 3)],
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Every relation maps a head integer to its tail by scaling then shifting,
/// so one scale-then-translate chain per relation fits the graph exactly.
pub fn affine_line(cfg: &AffineLineConfig) -> Dataset {
    let n = cfg.num_entities as i64;
    let mut triples = Vec::new();
    for (r, &(scale, shift)) in cfg.relations.iter().enumerate() {
        for h in 0..n {
            let t = scale * h + shift;
            if (0..n).contains(&t) && t != h {
                triples.push(Triple::new(h as u32, r as u32, t as u32));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = triples.len() as f64;
    let store = split_keeping_coverage(
        triples,
        (total * cfg.valid_fraction).round() as usize,
        (total * cfg.test_fraction).round() as usize,
        &mut rng,
    );
    let names: Vec<String> = cfg.relations.iter().map(|(a, b)| format!("times{a}_plus{b}")).collect();
    dataset(cfg.num_entities, &names, store)
}

/// Disjoint entity pairs joined by one symmetric relation. Every pair has a
/// training edge in one direction; a held-out share of pairs keeps only
/// that edge and puts the reverse into validation or test, the rest train
/// on both directions.
pub fn symmetric_pairs(num_pairs: usize, held_out_pairs: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..2 * num_pairs as u32).collect();
    ids.shuffle(&mut rng);
    let mut store = TripleStore::default();
    for (i, pair) in ids.chunks_exact(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        store.train.push(Triple::new(a, 0, b));
        let reverse = Triple::new(b, 0, a);
        if i < held_out_pairs {
            if i % 2 == 0 {
                store.valid.push(reverse);
            } else {
                store.test.push(reverse);
            }
        } else {
            store.train.push(reverse);
        }
    }
    dataset(2 * num_pairs, &["symmetric".to_owned()], store)
}

/// Uniformly random distinct triples, no self loops.
pub fn random_triples(num_entities: usize, num_relations: usize, count: usize, rng: &mut impl Rng) -> Vec<Triple> {
    let mut set = BTreeSet::new();
    let cap = num_entities * num_entities.saturating_sub(1) * num_relations;
    while set.len() < count.min(cap) {
        let h = rng.gen_range(0..num_entities as u32);
        let t = rng.gen_range(0..num_entities as u32);
        if h != t {
            set.insert(Triple::new(h, rng.gen_range(0..num_relations as u32), t));
        }
    }
    let mut out: Vec<Triple> = set.into_iter().collect();
    out.shuffle(rng);
    out
}
