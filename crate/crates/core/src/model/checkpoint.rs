//! Flat archive of named float64 matrices with a JSON header describing the
//! model that owns them.
//!
//! Layout, all integers little-endian `u64`:
//! `b"STEMCKPT"`, version, header length, header UTF-8 JSON, entry count,
//! then per entry: name length, name, rows, cols, `rows·cols` `f64` LE.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, ParamKind, ParamStore};

const MAGIC: &[u8; 8] = b"STEMCKPT";
const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub vocab_sizes: Vec<usize>,
    pub num_tasks: usize,
    pub seed: u64,
}

/// A model structure plus its parameter values.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(model: &Model, params: &ParamStore, seed: u64) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                model: model.config().clone(),
                vocab_sizes: model.schema().vocab_sizes().to_vec(),
                num_tasks: model.num_tasks(),
                seed,
            },
            params: params.clone(),
        }
    }

    /// Rebuilds the model and a store holding the saved values.
    pub fn restore(&self) -> Result<(Model, ParamStore)> {
        let schema = FieldSchema::new(self.header.vocab_sizes.clone())?;
        let (model, mut store) = Model::new(&self.header.model, &schema, self.header.num_tasks, self.header.seed)?;
        store.load_values_from(&self.params)?;
        Ok((model, store))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&self.header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u64(&mut out, VERSION);
        put_u64(&mut out, header.len() as u64);
        out.extend_from_slice(header.as_bytes());
        put_u64(&mut out, self.params.len() as u64);
        for (_, p) in self.params.iter() {
            put_u64(&mut out, p.name.len() as u64);
            out.extend_from_slice(p.name.as_bytes());
            put_u64(&mut out, p.value.rows() as u64);
            put_u64(&mut out, p.value.cols() as u64);
            for v in p.value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u64()?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let hlen = r.u64()? as usize;
        let header_text = std::str::from_utf8(r.take(hlen)?).map_err(|_| corrupt("header is not UTF-8"))?;
        let header: CheckpointHeader =
            serde_json::from_str(header_text).map_err(|e| corrupt(&format!("header: {e}")))?;
        let count = r.u64()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let nlen = r.u64()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| corrupt("name is not UTF-8"))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let raw = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| corrupt("size overflow"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let kind = if name.starts_with("emb.") {
                ParamKind::Embedding
            } else {
                ParamKind::Dense
            };
            params.insert(name, Matrix::from_vec(rows, cols, data)?, kind)?;
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Embedding table names present in the archive, in stored order.
    pub fn table_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| n.starts_with("emb."))
            .map(str::to_string)
            .collect()
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn corrupt(detail: &str) -> Error {
    Error::Parse {
        row: 0,
        detail: format!("checkpoint: {detail}"),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
