//! Model checkpoint file.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      [u8; 4] = "PDCK"
//! version    u16
//! digest     [u8; 32]  SHA-256 of the JSON model config
//! config     u32 length + JSON bytes
//! groups     u32 count, then per group:
//!   name     u32 length + UTF-8
//!   tensors  u32 count, then per tensor:
//!     name   u32 length + UTF-8
//!     rank   u32, dims u64 × rank
//!     data   f64 × product(dims)
//! ```

use std::path::Path;

use super::{Group, Model, ModelConfig, ModelParams};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PDCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub(crate) fn encode(model: &Model) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    w.bytes(&model.config.digest());
    let json = serde_json::to_string(&model.config).expect("config serializes");
    w.string(&json);
    let groups: Vec<_> = model.params.groups().collect();
    w.u32(groups.len() as u32);
    for (g, params) in groups {
        w.string(g.name());
        w.u32(params.len() as u32);
        for p in params {
            w.string(&p.name);
            w.u32(p.value.rank() as u32);
            for d in p.value.shape() {
                w.u64(*d as u64);
            }
            w.f64s(p.value.data());
        }
    }
    w.buf
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad checkpoint magic".into(),
        });
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let digest: [u8; 32] = r.take(32, "config digest")?.try_into().expect("32 bytes");
    let config_at = r.offset();
    let json = r.string("config")?;
    let config: ModelConfig = serde_json::from_str(&json).map_err(|e| Error::Format {
        offset: config_at,
        message: format!("invalid model config: {e}"),
    })?;
    if config.digest() != digest {
        return Err(Error::Format {
            offset: 6,
            message: "config digest mismatch".into(),
        });
    }

    let mut params = ModelParams::new();
    let n_groups = r.u32("group count")?;
    for _ in 0..n_groups {
        let at = r.offset();
        let gname = r.string("group name")?;
        let group = Group::from_name(&gname).ok_or_else(|| Error::Format {
            offset: at,
            message: format!("unknown group {gname:?}"),
        })?;
        let n = r.u32("tensor count")?;
        for _ in 0..n {
            let name = r.string("tensor name")?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dim")? as usize);
            }
            let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
            let at = r.offset();
            let data = r.f64s(len.ok_or_else(|| r.error("shape overflow"))?, "tensor data")?;
            let value = Tensor::new(shape, data).map_err(|e| Error::Format {
                offset: at,
                message: e.to_string(),
            })?;
            params.insert(group, name, value).map_err(|e| Error::Format {
                offset: at,
                message: e.to_string(),
            })?;
        }
    }
    if r.remaining() != 0 {
        return Err(r.error("trailing bytes after checkpoint"));
    }
    Model::new(config, params)
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::small_config;

    #[test]
    fn round_trip_is_exact() {
        let model = Model::init(small_config(), 42).unwrap();
        let back = decode(&encode(&model)).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode(&Model::init(small_config(), 1).unwrap());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad).unwrap_err().to_string().contains("version"));

        let mut bad = bytes.clone();
        bad[10] ^= 0xff;
        assert!(decode(&bad).unwrap_err().to_string().contains("digest"));

        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
