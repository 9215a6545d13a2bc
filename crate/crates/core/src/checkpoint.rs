//! Binary model checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, the entity table and the relation table as little-endian `f64`,
//! then a SHA-256 digest of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{hex, VocabFingerprint};
use crate::error::{Error, Result};
use crate::model::{Model, NormOrder, VariantSpec};

const MAGIC: &[u8; 8] = b"C3DKGE\0\0";
const FORMAT_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub code_version: String,
    pub variant: VariantSpec,
    pub dim: usize,
    pub norm: NormOrder,
    pub unit_entities: bool,
    pub num_entities: usize,
    pub num_relations: usize,
    pub vocab: VocabFingerprint,
    /// Hash of the canonical run configuration that produced the model.
    pub config_hash: String,
    #[serde(default)]
    pub config: serde_json::Value,
    /// Step of the saved parameters and, if validation ran, their MRR.
    #[serde(default)]
    pub step: Option<usize>,
    #[serde(default)]
    pub val_mrr: Option<f64>,
}

impl CheckpointHeader {
    pub fn for_model(model: &Model, vocab: VocabFingerprint, config_hash: impl Into<String>) -> Self {
        Self {
            code_version: CODE_VERSION.to_owned(),
            variant: model.variant().clone(),
            dim: model.dim(),
            norm: model.norm(),
            unit_entities: model.unit_entities(),
            num_entities: model.num_entities(),
            num_relations: model.num_relations(),
            vocab,
            config_hash: config_hash.into(),
            config: serde_json::Value::Null,
            step: None,
            val_mrr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

pub fn encode(header: &CheckpointHeader, model: &Model) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let tables = model.entity_table().len() + model.relation_table().len();
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * tables + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for x in model.entity_table().iter().chain(model.relation_table()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 + 32 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch; file is corrupt or truncated"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    let json = body
        .get(16..16 + hlen)
        .ok_or_else(|| bad("header runs past end of file"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let floats = &body[16 + hlen..];
    if floats.len() % 8 != 0 {
        return Err(bad("parameter section is not a whole number of f64 values"));
    }
    let values: Vec<f64> = floats
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let n_ent = header.num_entities * header.dim;
    if values.len() < n_ent {
        return Err(bad("entity table truncated"));
    }
    let (ent, rel) = values.split_at(n_ent);
    let mut model = Model::from_parts(
        header.variant.clone(),
        header.dim,
        header.norm,
        header.num_entities,
        header.num_relations,
        ent.to_vec(),
        rel.to_vec(),
    )?;
    model.set_unit_entities(header.unit_entities);
    Ok(Checkpoint { header, model })
}

pub fn save(path: impl AsRef<Path>, header: &CheckpointHeader, model: &Model) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(header, model)?;
    // write then rename so a crash never leaves a half-written checkpoint
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

/// Loads a checkpoint and refuses it unless it was trained on `vocab`.
pub fn load_for_vocab(path: impl AsRef<Path>, vocab: &VocabFingerprint) -> Result<Checkpoint> {
    let ckpt = load(path)?;
    if &ckpt.header.vocab != vocab {
        return Err(Error::VocabMismatch(format!(
            "checkpoint vocabulary {}/{} differs from dataset {}/{}",
            short(&ckpt.header.vocab.entities),
            short(&ckpt.header.vocab.relations),
            short(&vocab.entities),
            short(&vocab.relations)
        )));
    }
    Ok(ckpt)
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// SHA-256 hex digest of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
