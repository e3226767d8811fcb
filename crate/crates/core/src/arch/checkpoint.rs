//! Binary checkpoint container.
//!
//! Layout: `PKTSEG1`, u32 JSON length, JSON metadata, u32 record count, then per
//! record: u32 name length, UTF-8 name, u32 rank, rank x u32 dims, f32 values.
//! All integers and floats are little-endian. Batch-norm running statistics are
//! stored as records alongside the trainable parameters.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::name::ModelName;
use super::network::{ArchitectureSpec, Network};
use crate::error::{Error, Result};
use crate::nn::{HasParams, Tensor};
use crate::volume::Sequence;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"PKTSEG1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelName,
    /// Input channel order.
    pub subsets: Vec<Sequence>,
    pub architecture: ArchitectureSpec,
    pub epoch: usize,
    #[serde(default)]
    pub val_dice: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// A network together with its metadata.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub meta: CheckpointMeta,
    pub network: Network<f32>,
}

impl TrainedModel {
    /// Refuses when the stored model or architecture differs from the expectation.
    pub fn expect(&self, model: &ModelName, spec: &ArchitectureSpec) -> Result<()> {
        if &self.meta.model != model {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint holds {}, expected {model}",
                self.meta.model
            )));
        }
        if &self.meta.architecture != spec {
            return Err(Error::CheckpointMismatch(format!(
                "architecture {:?} differs from configured {spec:?}",
                self.meta.architecture
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::CheckpointMismatch(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(meta: &CheckpointMeta, net: &Network<f32>) -> Result<Vec<u8>> {
    if meta.architecture != net.spec() {
        return Err(Error::CheckpointMismatch("metadata architecture differs from network".into()));
    }
    let json = serde_json::to_vec(meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    let records: Vec<(&str, &Tensor<f32>)> = net
        .params()
        .into_iter()
        .map(|p| (p.name.as_str(), p.value()))
        .chain(net.buffers().into_iter().map(|b| (b.name.as_str(), &b.value)))
        .collect();
    put_u32(&mut out, records.len())?;
    for (name, t) in records {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, 5)?;
        for d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, net: &Network<f32>) -> Result<()> {
    let bytes = encode_checkpoint(meta, net)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CheckpointMismatch("truncated checkpoint".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let mut c = Cursor { data: bytes, pos: 0 };
    if c.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointMismatch("bad magic".into()));
    }
    let jlen = c.u32()?;
    let meta: CheckpointMeta =
        serde_json::from_slice(c.take(jlen)?).map_err(|e| Error::CheckpointMismatch(format!("metadata: {e}")))?;
    if meta.subsets.len() != meta.architecture.in_channels() {
        return Err(Error::CheckpointMismatch(format!(
            "{} subsets for a {}-channel network",
            meta.subsets.len(),
            meta.architecture.in_channels()
        )));
    }
    let n = c.u32()?;
    let mut records: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()?;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::CheckpointMismatch("non-UTF-8 record name".into()))?
            .to_string();
        let rank = c.u32()?;
        let dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = c.take(count * 4)?;
        let vals = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if records.insert(name.clone(), (dims, vals)).is_some() {
            return Err(Error::CheckpointMismatch(format!("duplicate record {name}")));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::CheckpointMismatch("trailing bytes".into()));
    }
    let mut net = Network::<f32>::build(&meta.architecture, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut fill = |name: &str, t: &mut Tensor<f32>| -> Result<()> {
        let (dims, vals) = records
            .remove(name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing record {name}")))?;
        if dims != t.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "{name}: stored shape {dims:?}, network expects {:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(&vals);
        Ok(())
    };
    for p in net.params_mut() {
        let name = p.name.clone();
        fill(&name, p.value_mut())?;
    }
    for b in net.buffers_mut() {
        let name = b.name.clone();
        fill(&name, &mut b.value)?;
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::CheckpointMismatch(format!("unexpected record {extra}")));
    }
    Ok(TrainedModel { meta, network: net })
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
