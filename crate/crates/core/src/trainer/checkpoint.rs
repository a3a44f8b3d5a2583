//! Checkpoint files.
//!
//! Layout: the 8 magic bytes `LCNNCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then for
//! every parameter tensor (header order) and every batch-norm layer (mean
//! then var) a little-endian `u64` element count followed by that many
//! little-endian `f32`s.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LclError, Result};
use crate::model::{ModelParams, ModelSpec, RunningStats};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LCNNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Optimizer steps completed.
    pub step: u64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    step: u64,
    seed: u64,
    momentum: String,
    tensors: Vec<TensorEntry>,
    bn_layers: Vec<BnEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BnEntry {
    name: String,
    channels: usize,
    recorded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

fn push_block(out: &mut Vec<u8>, values: &[f32]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &ModelParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        spec: params.spec().clone(),
        step: meta.step,
        seed: meta.seed,
        momentum: "classical".into(),
        tensors: params
            .tensors()
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                dims: t.dims().to_vec(),
            })
            .collect(),
        bn_layers: params
            .bn_stats()
            .iter()
            .map(|(name, s)| BnEntry {
                name: name.clone(),
                channels: s.mean.len(),
                recorded: s.recorded,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| LclError::Json {
        context: "checkpoint header".into(),
        source: e,
    })?;
    let mut out = Vec::with_capacity(json.len() + 4 * params.num_scalars() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors().values() {
        push_block(&mut out, t.data());
    }
    for s in params.bn_stats().values() {
        push_block(&mut out, &s.mean);
        push_block(&mut out, &s.var);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LclError::Checkpoint(format!("file truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn block(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let n = self.u64(what)?;
        if n != expected as u64 {
            return Err(LclError::Checkpoint(format!(
                "{what}: header promises {expected} values, block holds {n}"
            )));
        }
        let raw = self.take(expected * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(LclError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(LclError::Checkpoint(format!(
            "unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let len = r.u64("header length")?;
    let len = usize::try_from(len).map_err(|_| LclError::Checkpoint("header length overflows".into()))?;
    let header: Header = serde_json::from_slice(r.take(len, "header")?).map_err(|e| LclError::Json {
        context: "checkpoint header".into(),
        source: e,
    })?;
    if header.format_version != version {
        return Err(LclError::Checkpoint("header and preamble disagree on the version".into()));
    }
    if header.momentum != "classical" {
        return Err(LclError::Checkpoint(format!("unknown momentum variant `{}`", header.momentum)));
    }

    let mut tensors = BTreeMap::new();
    for e in &header.tensors {
        let numel: usize = e.dims.iter().product();
        let data = r.block(numel, &e.name)?;
        tensors.insert(e.name.clone(), Tensor::new(e.dims.clone(), data)?);
    }
    let mut bn_stats = BTreeMap::new();
    for e in &header.bn_layers {
        let mean = r.block(e.channels, &format!("{} running mean", e.name))?;
        let var = r.block(e.channels, &format!("{} running var", e.name))?;
        bn_stats.insert(
            e.name.clone(),
            RunningStats {
                mean,
                var,
                recorded: e.recorded,
            },
        );
    }
    if r.pos != bytes.len() {
        return Err(LclError::Checkpoint(format!(
            "{} trailing bytes after the last block",
            bytes.len() - r.pos
        )));
    }
    let params = ModelParams::new(header.spec, tensors, bn_stats)?;
    Ok(Checkpoint {
        params,
        meta: CheckpointMeta {
            step: header.step,
            seed: header.seed,
        },
    })
}

/// Writes to a sibling temporary file first, then renames over `path`.
pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(params, meta)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LclError::io(format!("creating {}", dir.display()), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes).map_err(|e| LclError::io(format!("writing {}", path.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| LclError::io(format!("renaming into {}", path.display()), e))
}

/// Reads the whole file, then decodes; nothing is returned unless every block parsed.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| LclError::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

/// As [`load_checkpoint`], requiring the stored architecture to equal `spec`.
pub fn load_checkpoint_for(path: &Path, spec: &ModelSpec) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.params.spec() != spec {
        return Err(LclError::shape(format!(
            "checkpoint holds {:?}, config expects {:?}",
            ckpt.params.spec(),
            spec
        )));
    }
    Ok(ckpt)
}
