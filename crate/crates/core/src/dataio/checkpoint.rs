//! Versioned checkpoint container.
//!
//! ```text
//! "IHDM"                 4 bytes
//! version                u32 LE
//! metadata length        u64 LE
//! metadata               TOML text
//! record count           u32 LE
//! per record:
//!   name length, name    u32 LE, UTF-8 bytes
//!   dtype                u8 (1 = f32, 2 = f64)
//!   rank                 u32 LE
//!   dims                 rank × u64 LE
//!   values               raw LE
//!   checksum             u32 LE, CRC-32 of the value bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Architecture, DenoiserParams, EmaState, Init, NamedTensor, OptimizerState, Scalar, Tensor};
use crate::schedule::BlurSchedule;
use crate::training::TrainConfig;

use super::{read_file, write_file};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"IHDM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// One named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u64>,
    pub bytes: Vec<u8>,
}

impl TensorRecord {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        Self {
            name: name.into(),
            dtype: DType::from_code(T::DTYPE).expect("scalar dtype code"),
            dims: t.shape().iter().map(|&d| d as u64).collect(),
            bytes: T::to_le_bytes_vec(t.values()),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.dtype.code() != T::DTYPE {
            return Err(Error::InvalidInput(format!(
                "tensor {:?} is stored as {:?}",
                self.name, self.dtype
            )));
        }
        let shape = self.dims.iter().map(|&d| d as usize).collect();
        Ok(Tensor::new(shape, T::from_le_bytes_slice(&self.bytes)))
    }
}

/// Serializes a metadata block and records.
pub fn encode_container(version: u32, metadata: &str, records: &[TensorRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(CHECKPOINT_MAGIC);
    out.extend(version.to_le_bytes());
    out.extend((metadata.len() as u64).to_le_bytes());
    out.extend(metadata.as_bytes());
    out.extend((records.len() as u32).to_le_bytes());
    for r in records {
        out.extend((r.name.len() as u32).to_le_bytes());
        out.extend(r.name.as_bytes());
        out.push(r.dtype.code());
        out.extend((r.dims.len() as u32).to_le_bytes());
        for d in &r.dims {
            out.extend(d.to_le_bytes());
        }
        out.extend(&r.bytes);
        out.extend(crc32fast::hash(&r.bytes).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                context: self.context.to_string(),
                offset: self.pos as u64,
                message: format!("file ends inside {what}"),
            }),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn err(&self, message: String) -> Error {
        Error::Format {
            context: self.context.to_string(),
            offset: self.pos as u64,
            message,
        }
    }
}

/// Parses a container, verifying magic, version and every checksum.
pub fn decode_container(bytes: &[u8], context: &str) -> Result<(String, Vec<TensorRecord>)> {
    let mut c = Cursor { bytes, pos: 0, context };
    let magic = c.take(4, "the magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: "IHDM".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = c.u32("the version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let meta_len = c.u64("the metadata length")? as usize;
    let meta = c.take(meta_len, "the metadata")?;
    let meta = std::str::from_utf8(meta)
        .map_err(|e| c.err(format!("metadata is not UTF-8: {e}")))?
        .to_string();
    let count = c.u32("the record count")?;
    // a record takes at least 13 bytes; never trust the count for allocation
    let mut records = Vec::with_capacity((count as usize).min((bytes.len() - c.pos) / 13));
    for _ in 0..count {
        let name_len = c.u32("a record name length")? as usize;
        let name = c.take(name_len, "a record name")?;
        let name = String::from_utf8(name.to_vec()).map_err(|e| c.err(format!("record name is not UTF-8: {e}")))?;
        let code = c.u8("a dtype code")?;
        let dtype = DType::from_code(code).ok_or_else(|| c.err(format!("unknown dtype code {code} for {name:?}")))?;
        let rank = c.u32("a rank")? as usize;
        let dims = (0..rank).map(|_| c.u64("a dimension")).collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(dtype.size()))
            .ok_or_else(|| c.err(format!("dimensions of {name:?} overflow")))?;
        let payload = c.take(count, "tensor values")?.to_vec();
        let stored = c.u32("a checksum")?;
        let actual = crc32fast::hash(&payload);
        if stored != actual {
            return Err(Error::Corrupted {
                name,
                expected: stored,
                found: actual,
            });
        }
        records.push(TensorRecord {
            name,
            dtype,
            dims,
            bytes: payload,
        });
    }
    if c.pos != bytes.len() {
        return Err(c.err(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok((meta, records))
}

/// How the random streams of a run are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngDescriptor {
    pub algorithm: String,
    pub seed: u64,
    /// Next training step whose stream will be drawn.
    pub next_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Training steps taken, including skipped updates.
    pub step: u64,
    /// Adam updates actually applied.
    pub optimizer_step: u64,
    pub tags: Vec<String>,
    pub rng: RngDescriptor,
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub schedule: BlurSchedule,
}

/// Full training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: DenoiserParams<f32>,
    pub ema: EmaState<f32>,
    pub optimizer: OptimizerState<f32>,
}

const GROUPS: [&str; 4] = ["params", "ema", "adam.m", "adam.v"];

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = toml::to_string(&self.meta)
            .map_err(|e| Error::Config(format!("cannot serialize checkpoint metadata: {e}")))?;
        let mut records = Vec::new();
        let names = self.params.tensors();
        for (group, list) in GROUPS.iter().zip([
            tensors_of(&self.params),
            tensors_of(&self.ema.shadow),
            moment_tensors(names, &self.optimizer.m),
            moment_tensors(names, &self.optimizer.v),
        ]) {
            for (name, t) in list {
                records.push(TensorRecord::from_tensor(format!("{group}/{name}"), &t));
            }
        }
        Ok(encode_container(CHECKPOINT_VERSION, &meta, &records))
    }

    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        let (meta_text, records) = decode_container(bytes, context)?;
        let meta: CheckpointMeta =
            toml::from_str(&meta_text).map_err(|e| Error::Config(format!("checkpoint metadata in {context}: {e}")))?;
        let find = |full: &str| -> Result<Tensor<f32>> {
            records
                .iter()
                .find(|r| r.name == full)
                .ok_or_else(|| Error::InvalidInput(format!("{context}: missing tensor {full:?}")))?
                .to_tensor()
        };
        let reference = DenoiserParams::<f32>::init(meta.architecture.clone(), 0, Init::Standard)?;
        let mut groups: Vec<Vec<NamedTensor<f32>>> = Vec::new();
        for group in GROUPS {
            let mut list = Vec::new();
            for r in reference.tensors() {
                list.push(NamedTensor {
                    name: r.name.clone(),
                    tensor: find(&format!("{group}/{}", r.name))?,
                });
            }
            groups.push(list);
        }
        let v = groups.pop().expect("four groups");
        let m = groups.pop().expect("four groups");
        let ema = groups.pop().expect("four groups");
        let params = groups.pop().expect("four groups");
        let arch = meta.architecture.clone();
        let params = DenoiserParams::from_tensors(arch.clone(), params)?;
        let ema = DenoiserParams::from_tensors(arch.clone(), ema)?;
        let m = DenoiserParams::from_tensors(arch.clone(), m)?;
        let v = DenoiserParams::from_tensors(arch, v)?;
        let optimizer = OptimizerState {
            config: meta.config.optimizer.clone(),
            m: m.tensors().iter().map(|t| t.tensor.values().to_vec()).collect(),
            v: v.tensors().iter().map(|t| t.tensor.values().to_vec()).collect(),
            step: meta.optimizer_step,
        };
        Ok(Self {
            ema: EmaState {
                rate: meta.config.ema_rate,
                shadow: ema,
            },
            meta,
            params,
            optimizer,
        })
    }
}

fn tensors_of(p: &DenoiserParams<f32>) -> Vec<(String, Tensor<f32>)> {
    p.tensors().iter().map(|t| (t.name.clone(), t.tensor.clone())).collect()
}

fn moment_tensors(names: &[NamedTensor<f32>], moments: &[Vec<f32>]) -> Vec<(String, Tensor<f32>)> {
    names
        .iter()
        .zip(moments)
        .map(|(n, m)| (n.name.clone(), Tensor::new(n.tensor.shape().to_vec(), m.clone())))
        .collect()
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    Checkpoint::from_bytes(&read_file(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, vals: Vec<f64>) -> TensorRecord {
        TensorRecord::from_tensor(name, &Tensor::new(vec![vals.len()], vals))
    }

    #[test]
    fn container_roundtrip() {
        let recs = vec![record("a", vec![1.0, -2.5]), record("b/c", vec![])];
        let bytes = encode_container(CHECKPOINT_VERSION, "x = 1\n", &recs);
        let (meta, back) = decode_container(&bytes, "t").unwrap();
        assert_eq!(meta, "x = 1\n");
        assert_eq!(back, recs);
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = encode_container(CHECKPOINT_VERSION, "", &[]);
        bytes[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode_container(&bytes, "t"),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_container(&bytes, "t"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode_container(CHECKPOINT_VERSION, "m", &[record("a", vec![1.0])]);
        let err = decode_container(&bytes[..bytes.len() - 3], "t").unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
}
