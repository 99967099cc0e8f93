//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//! magic (8 bytes), `u32` version, `u32` config length, config as TOML,
//! then for each of the 8 parameter tensors in [`PARAM_NAMES`] order:
//! `u32` rank, `u64` per dimension, `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use super::{CnnConfig, CnnModel, Params, Tensor, PARAM_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NETCLCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &CnnModel) -> Result<Vec<u8>> {
    let config = toml::to_string(&model.config).map_err(|e| Error::Checkpoint(format!("serialising config: {e}")))?;
    let mut out = Vec::with_capacity(16 + config.len() + model.params.len() * 8 + 256);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    for t in model.params.tensors() {
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CnnModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = cur.u32("config length")? as usize;
    let text = std::str::from_utf8(cur.take(len, "config")?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let config: CnnConfig = toml::from_str(text).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let expected = Params::zeros(&config)?;
    let mut tensors = Vec::with_capacity(8);
    for (name, want) in PARAM_NAMES.iter().zip(expected.tensors()) {
        let rank = cur.u32(name)? as usize;
        let shape = (0..rank).map(|_| cur.u64(name).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != want.shape {
            return Err(Error::Checkpoint(format!("{name}: shape {shape:?}, config implies {:?}", want.shape)));
        }
        let raw = cur.take(want.len() * 8, name)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor { shape, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().unwrap();
    let params = Params {
        conv1_w: next(),
        conv1_b: next(),
        conv2_w: next(),
        conv2_b: next(),
        fc1_w: next(),
        fc1_b: next(),
        fc2_w: next(),
        fc2_b: next(),
    };
    CnnModel::from_params(config, params)
}

pub fn write_checkpoint(model: &CnnModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_checkpoint(path: &Path) -> Result<CnnModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CnnModel {
        CnnModel::new(CnnConfig { input_size: 14, kernel: 3, fc_units: 7, seed: 11, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&m, &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&model()).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_checkpoint(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(decode_checkpoint(&bad_version).unwrap_err().to_string().contains("version"));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
    }
}
