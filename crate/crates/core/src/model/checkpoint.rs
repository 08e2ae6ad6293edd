//! Checkpoint directory layout:
//!
//! * `config.json`: the [`ToyModelConfig`].
//! * `adapters.json`: an [`AdapterCheckpoint`].
//! * `base.bin`: frozen weights. 16-byte magic `MORAL-BASE-WGHTS`, one
//!   version byte, a little-endian `u32` tensor count, then per tensor a
//!   `u16` name length, the UTF-8 name, `u32` rows, `u32` cols and
//!   `rows × cols` little-endian `f64` values in row-major order.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::ToyModelConfig;
use super::transformer::{BaseWeights, ToyModel};
use crate::adapter::{AdapterCheckpoint, MoralLayer};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const BASE_MAGIC: &[u8; 16] = b"MORAL-BASE-WGHTS";
pub const BASE_VERSION: u8 = 1;

pub const CONFIG_FILE: &str = "config.json";
pub const ADAPTER_FILE: &str = "adapters.json";
pub const BASE_FILE: &str = "base.bin";

pub fn encode_base_weights<F: crate::adapter::AdaptedFfn>(model: &ToyModel<F>) -> Vec<u8> {
    let tensors = model.base_tensors();
    let vectors = model.norm_vectors();
    let mut out = Vec::new();
    out.extend_from_slice(BASE_MAGIC);
    out.push(BASE_VERSION);
    out.extend_from_slice(&((tensors.len() + vectors.len()) as u32).to_le_bytes());
    let mut put = |name: &str, rows: usize, cols: usize, data: &[f64]| {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, m) in &tensors {
        put(name, m.rows(), m.cols(), m.as_slice());
    }
    for (name, v) in &vectors {
        put(name, 1, v.len(), v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format {
                message: "truncated base weight file".into(),
                raw: String::new(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

type NamedTensors = (BTreeMap<String, Matrix>, BTreeMap<String, Vec<f64>>);

pub fn decode_base_weights(bytes: &[u8]) -> Result<NamedTensors> {
    let bad = |message: &str| Error::Format {
        message: message.into(),
        raw: String::new(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(16)? != BASE_MAGIC {
        return Err(bad("bad magic in base weight file"));
    }
    let version = r.take(1)?[0];
    if version != BASE_VERSION {
        return Err(bad(&format!("unsupported base weight version {version}")));
    }
    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    let mut vectors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data: Vec<f64> = r
            .take(rows * cols * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if name.ends_with(".gain") || name.ends_with(".bias") {
            vectors.insert(name, data);
        } else {
            tensors.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes in base weight file"));
    }
    Ok((tensors, vectors))
}

pub fn save_checkpoint(model: &ToyModel<MoralLayer>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(CONFIG_FILE, serde_json::to_string_pretty(model.config())?.as_bytes())?;
    write(
        ADAPTER_FILE,
        AdapterCheckpoint::from_layers(model.ffns()).to_json()?.as_bytes(),
    )?;
    write(BASE_FILE, &encode_base_weights(model))
}

pub fn load_checkpoint(dir: &Path) -> Result<ToyModel<MoralLayer>> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let cfg: ToyModelConfig = serde_json::from_slice(&read(CONFIG_FILE)?)?;
    cfg.validate()?;
    let adapters = AdapterCheckpoint::from_json(&String::from_utf8_lossy(&read(ADAPTER_FILE)?))?;
    let (mut tensors, mut vectors) = decode_base_weights(&read(BASE_FILE)?)?;
    let (base, ffns) = BaseWeights::from_named(&cfg, &mut tensors, &mut vectors)?;
    if adapters.layers.len() != ffns.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} adapter layers for {} FFN blocks",
            adapters.layers.len(),
            ffns.len()
        )));
    }
    let layers = adapters
        .layers
        .into_iter()
        .zip(ffns)
        .map(|(json, ffn)| json.into_layer(ffn))
        .collect::<Result<Vec<_>>>()?;
    ToyModel::from_parts(cfg, base, layers)
}
