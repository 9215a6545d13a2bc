//! Triple ingestion, vocabularies, the filtered-ranking index and
//! relation-type classification.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self { head, relation, tail }
    }
}

/// A dense name ↔ id bijection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self::default();
        for name in names {
            let name = name.into();
            if out.index.contains_key(&name) {
                return Err(Error::Dataset(format!("duplicate vocabulary entry {name:?}")));
            }
            out.intern(&name);
        }
        Ok(out)
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// SHA-256 over the names in id order, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub entities: Interner,
    pub relations: Interner,
}

impl Vocab {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn fingerprint(&self) -> VocabFingerprint {
        VocabFingerprint {
            entities: self.entities.fingerprint(),
            relations: self.relations.fingerprint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabFingerprint {
    pub entities: String,
    pub relations: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl TripleStore {
    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that every id is within the vocabulary.
    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        for t in self.all() {
            for (what, id, size) in [
                ("entity", t.head as usize, num_entities),
                ("relation", t.relation as usize, num_relations),
                ("entity", t.tail as usize, num_entities),
            ] {
                if id >= size {
                    return Err(Error::IdOutOfRange { what, id, size });
                }
            }
        }
        Ok(())
    }
}

/// A loaded dataset: vocabulary plus integer-encoded splits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub vocab: Vocab,
    pub store: TripleStore,
}

fn find_split_file(dir: &Path, split: Split) -> Option<PathBuf> {
    let stem = split.name();
    [format!("{stem}.txt"), format!("{stem}.tsv"), stem.to_owned()]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn read_dict(path: &Path) -> Result<Interner> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(id), Some(name), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Malformed {
                path: path.to_owned(),
                line: i + 1,
                message: "expected \"id<TAB>name\"".into(),
            });
        };
        let id: usize = id.trim().parse().map_err(|_| Error::Malformed {
            path: path.to_owned(),
            line: i + 1,
            message: format!("bad id {id:?}"),
        })?;
        entries.push((id, name.to_owned()));
    }
    entries.sort();
    if entries.iter().enumerate().any(|(i, (id, _))| *id != i) {
        return Err(Error::Dataset(format!("{}: ids are not dense from 0", path.display())));
    }
    Interner::from_names(entries.into_iter().map(|(_, n)| n))
}

/// Parses tab-separated `head relation tail` lines, interning names.
pub fn parse_triples(text: &str, path: &Path, vocab: &mut Vocab) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Malformed {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = vocab.entities.intern(fields[0]);
        let relation = vocab.relations.intern(fields[1]);
        let tail = vocab.entities.intern(fields[2]);
        out.push(Triple::new(head, relation, tail));
    }
    Ok(out)
}

/// Loads `train`, `valid` and `test` triple files from a directory.
///
/// Ids are assigned in first-appearance order over train, then valid, then
/// test. If `entities.dict` and `relations.dict` (`id<TAB>name`) are present
/// they seed the vocabulary and unseen names are appended after them.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut vocab = Vocab::default();
    let (ent_dict, rel_dict) = (dir.join("entities.dict"), dir.join("relations.dict"));
    if ent_dict.is_file() && rel_dict.is_file() {
        vocab.entities = read_dict(&ent_dict)?;
        vocab.relations = read_dict(&rel_dict)?;
    }
    let mut store = TripleStore::default();
    for split in Split::ALL {
        let path = find_split_file(dir, split)
            .ok_or_else(|| Error::Dataset(format!("no {} file in {}", split.name(), dir.display())))?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let triples = parse_triples(&text, &path, &mut vocab)?;
        match split {
            Split::Train => store.train = triples,
            Split::Valid => store.valid = triples,
            Split::Test => store.test = triples,
        }
    }
    if store.train.is_empty() {
        return Err(Error::Dataset(format!("training split in {} is empty", dir.display())));
    }
    Ok(Dataset { vocab, store })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub duplicate_train: usize,
    pub duplicate_valid: usize,
    pub duplicate_test: usize,
    /// Triples of valid/test that also appear in train.
    pub overlap_with_train: usize,
}

impl DatasetStats {
    pub fn compute(ds: &Dataset) -> Self {
        let dups = |ts: &[Triple]| ts.len() - ts.iter().collect::<HashSet<_>>().len();
        let train_set: HashSet<&Triple> = ds.store.train.iter().collect();
        let overlap = ds
            .store
            .valid
            .iter()
            .chain(&ds.store.test)
            .filter(|t| train_set.contains(t))
            .count();
        Self {
            entities: ds.vocab.num_entities(),
            relations: ds.vocab.num_relations(),
            train: ds.store.train.len(),
            valid: ds.store.valid.len(),
            test: ds.store.test.len(),
            duplicate_train: dups(&ds.store.train),
            duplicate_valid: dups(&ds.store.valid),
            duplicate_test: dups(&ds.store.test),
            overlap_with_train: overlap,
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities={}", self.entities)?;
        writeln!(f, "relations={}", self.relations)?;
        writeln!(f, "train={}", self.train)?;
        writeln!(f, "valid={}", self.valid)?;
        writeln!(f, "test={}", self.test)?;
        writeln!(f, "duplicate_train={}", self.duplicate_train)?;
        writeln!(f, "duplicate_valid={}", self.duplicate_valid)?;
        writeln!(f, "duplicate_test={}", self.duplicate_test)?;
        writeln!(f, "overlap_with_train={}", self.overlap_with_train)
    }
}

#[inline]
fn pair_key(a: u32, b: u32) -> u64 {
    (u64::from(a) << 32) | u64::from(b)
}

/// Known true tails per `(head, relation)` and heads per `(relation, tail)`.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<u64, Vec<u32>>,
    heads: HashMap<u64, Vec<u32>>,
}

impl FilterIndex {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut idx = Self::default();
        for t in triples {
            idx.tails.entry(pair_key(t.head, t.relation)).or_default().push(t.tail);
            idx.heads.entry(pair_key(t.relation, t.tail)).or_default().push(t.head);
        }
        for v in idx.tails.values_mut().chain(idx.heads.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        idx
    }

    /// Index over train ∪ valid ∪ test.
    pub fn build(store: &TripleStore) -> Self {
        Self::from_triples(store.all())
    }

    /// Sorted true tails of `(head, relation, ?)`.
    pub fn tails(&self, head: u32, relation: u32) -> &[u32] {
        self.tails.get(&pair_key(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Sorted true heads of `(?, relation, tail)`.
    pub fn heads(&self, relation: u32, tail: u32) -> &[u32] {
        self.heads.get(&pair_key(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails(t.head, t.relation).binary_search(&t.tail).is_ok()
    }

    pub fn tail_keys(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.tails.keys().map(|k| ((k >> 32) as u32, *k as u32))
    }

    /// Total number of distinct `(h, r, t)` entries.
    pub fn len(&self) -> usize {
        self.tails.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
    Unknown,
}

impl RelationType {
    pub fn label(self) -> &'static str {
        match self {
            RelationType::OneToOne => "1-to-1",
            RelationType::OneToMany => "1-to-N",
            RelationType::ManyToOne => "N-to-1",
            RelationType::ManyToMany => "N-to-N",
            RelationType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const DEFAULT_RELATION_TYPE_THRESHOLD: f64 = 1.5;

/// Labels each relation by average tails-per-head and heads-per-tail over
/// the given (training) triples. Relations that never occur are `Unknown`.
pub fn classify_relations(train: &[Triple], num_relations: usize, threshold: f64) -> Vec<RelationType> {
    let distinct: HashSet<&Triple> = train.iter().collect();
    let mut tails_of: Vec<HashMap<u32, usize>> = vec![HashMap::new(); num_relations];
    let mut heads_of: Vec<HashMap<u32, usize>> = vec![HashMap::new(); num_relations];
    for t in distinct {
        let r = t.relation as usize;
        if r >= num_relations {
            continue;
        }
        *tails_of[r].entry(t.head).or_default() += 1;
        *heads_of[r].entry(t.tail).or_default() += 1;
    }
    (0..num_relations)
        .map(|r| {
            if tails_of[r].is_empty() {
                return RelationType::Unknown;
            }
            let avg = |m: &HashMap<u32, usize>| m.values().sum::<usize>() as f64 / m.len() as f64;
            let tph = avg(&tails_of[r]);
            let hpt = avg(&heads_of[r]);
            match (tph >= threshold, hpt >= threshold) {
                (false, false) => RelationType::OneToOne,
                (true, false) => RelationType::OneToMany,
                (false, true) => RelationType::ManyToOne,
                (true, true) => RelationType::ManyToMany,
            }
        })
        .collect()
}
