//! Versioned binary checkpoint: magic, format version, a JSON header with the
//! architecture, then the α, β and γ stores as `name, shape, values` records
//! with little-endian `f64` payloads.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{NetConfig, Networks};
use super::params::{ParamStore, Tensor};
use crate::error::{CdfaError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CDFACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: NetConfig,
    epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Number of completed epochs.
    pub epoch: usize,
    pub nets: Networks,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_store(out: &mut Vec<u8>, store: &ParamStore) {
    put_u32(out, store.tensors().len() as u32);
    for t in store.tensors() {
        put_u32(out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u64(out, d as u64);
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.nets.config.clone(),
            epoch: self.epoch,
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u64(&mut out, header.len() as u64);
        out.extend_from_slice(&header);
        for store in [&self.nets.alpha, &self.nets.beta, &self.nets.gamma] {
            put_store(&mut out, store);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let hlen = r.len_u64()?;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| format!("bad header: {e}"))?;
        let alpha = r.store()?;
        let beta = r.store()?;
        let gamma = r.store()?;
        if r.pos != bytes.len() {
            return Err("trailing bytes after parameter records".into());
        }
        let nets = Networks {
            config: header.config,
            alpha,
            beta,
            gamma,
        };
        nets.validate().map_err(|e| e.to_string())?;
        Ok(Checkpoint {
            epoch: header.epoch,
            nets,
        })
    }

    /// Writes through a temporary sibling and renames, so a crash never
    /// leaves a truncated file at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            CdfaError::io(path, e)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CdfaError::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|m| CdfaError::format(path, m))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or("unexpected end of checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn len_u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| "length overflow".to_string())
    }

    fn store(&mut self) -> std::result::Result<ParamStore, String> {
        let n = self.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name_len = self.u32()? as usize;
            let name = String::from_utf8(self.take(name_len)?.to_vec())
                .map_err(|_| "tensor name is not UTF-8")?;
            let ndim = self.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| self.len_u64())
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or("tensor size overflow")?;
            let raw = self.take(len.checked_mul(8).ok_or("tensor size overflow")?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor {
                name,
                shape,
                values,
            });
        }
        ParamStore::new(tensors).map_err(|e: CdfaError| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = NetConfig {
            input_height: 8,
            input_width: 8,
            channels: vec![4, 4],
            feature_dim: 5,
            policy_hidden: vec![6],
        };
        Checkpoint {
            epoch: 7,
            nets: Networks::init(cfg, &mut rng).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ck = sample();
        ck.nets.alpha.tensor_mut(0).values[0] = -0.0;
        ck.nets.beta.tensor_mut(1).values[0] = f64::MIN_POSITIVE / 3.0;
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let bits = |c: &Checkpoint| -> Vec<u64> {
            [&c.nets.alpha, &c.nets.beta, &c.nets.gamma]
                .iter()
                .flat_map(|s| s.values().map(f64::to_bits).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&back), bits(&ck));
        assert_eq!(back.epoch, 7);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad)
            .unwrap_err()
            .contains("version"));
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
