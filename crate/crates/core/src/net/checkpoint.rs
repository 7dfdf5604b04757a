//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "DKGN" | u16 version | u32 header_len | header JSON
//!        | u32 record_count | records... | u32 CRC32 of everything before
//! record = u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 payload
//! ```
//!
//! The JSON header carries the training config, both network specs, the
//! optimizer step counters, the iteration count and the RNG position.

use super::spec::NetworkSpec;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DKGN";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub generator: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub g_params: ParamSet<f32>,
    pub d_params: ParamSet<f32>,
    pub g_adam: AdamState<f32>,
    pub d_adam: AdamState<f32>,
    pub iteration: u64,
    pub rng_state: u64,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    seed: u64,
    generator: NetworkSpec,
    discriminator: NetworkSpec,
    g_adam: OptimizerHeader,
    d_adam: OptimizerHeader,
    iteration: u64,
    rng_state: u64,
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

type Record = (String, Vec<usize>, Vec<f32>);

fn get_record(cur: &mut Cursor<'_>) -> Result<Record> {
    let name_len = cur.u16()? as usize;
    let name = std::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
        .to_string();
    let ndim = cur.u8()? as usize;
    let shape = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let numel: usize = shape.iter().product();
    let payload = cur.take(numel.checked_mul(4).ok_or_else(|| Error::Format("record too large".into()))?)?;
    let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
    Ok((name, shape, data))
}

impl Checkpoint {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    fn records(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut recs = Vec::new();
        for (prefix, params, adam) in [("G", &self.g_params, &self.g_adam), ("D", &self.d_params, &self.d_adam)] {
            for p in params.iter() {
                recs.push((format!("{prefix}/{}", p.name), p.tensor.shape().to_vec(), p.tensor.data()));
            }
            for (p, m) in params.iter().zip(&adam.m) {
                recs.push((format!("{prefix}.adam_m/{}", p.name), p.tensor.shape().to_vec(), m.as_slice()));
            }
            for (p, v) in params.iter().zip(&adam.v) {
                recs.push((format!("{prefix}.adam_v/{}", p.name), p.tensor.shape().to_vec(), v.as_slice()));
            }
        }
        recs
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            seed: self.config.seed,
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            g_adam: OptimizerHeader { config: self.g_adam.config, step: self.g_adam.step },
            d_adam: OptimizerHeader { config: self.d_adam.config, step: self.d_adam.step },
            iteration: self.iteration,
            rng_state: self.rng_state,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let recs = self.records();
        out.extend_from_slice(&(recs.len() as u32).to_le_bytes());
        for (name, shape, data) in &recs {
            put_record(&mut out, name, shape, data);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        if data.len() < 4 + 2 + 4 + 4 + 4 {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (body, trailer) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let mut cur = Cursor { data: body, pos: 4 };
        let version = cur.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let json_len = cur.u32()? as usize;
        let json = cur.take(json_len)?;
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("checkpoint CRC32 mismatch".into()));
        }
        let header: Header = serde_json::from_slice(json)?;
        let count = cur.u32()? as usize;
        let mut records = std::collections::HashMap::with_capacity(count);
        for _ in 0..count {
            let (name, shape, values) = get_record(&mut cur)?;
            records.insert(name, (shape, values));
        }
        if cur.pos != body.len() {
            return Err(Error::Format("trailing bytes after parameter records".into()));
        }

        let mut take = |name: String, shape: &[usize]| -> Result<Vec<f32>> {
            let (s, v) = records.remove(&name).ok_or_else(|| Error::Format(format!("missing record `{name}`")))?;
            if s != shape {
                return Err(Error::Format(format!("record `{name}` has shape {s:?}, expected {shape:?}")));
            }
            Ok(v)
        };
        let mut load = |prefix: &str, spec: &NetworkSpec, opt: &OptimizerHeader| -> Result<(ParamSet<f32>, AdamState<f32>)> {
            let mut params = ParamSet::new();
            let mut m = Vec::new();
            let mut v = Vec::new();
            for l in &spec.layers {
                let shape = l.weight_shape();
                let name = l.param_name();
                params.push(name.clone(), Tensor::new(shape.clone(), take(format!("{prefix}/{name}"), &shape)?)?)?;
                m.push(take(format!("{prefix}.adam_m/{name}"), &shape)?);
                v.push(take(format!("{prefix}.adam_v/{name}"), &shape)?);
            }
            Ok((params, AdamState { config: opt.config, step: opt.step, m, v }))
        };
        let (g_params, g_adam) = load("G", &header.generator, &header.g_adam)?;
        let (d_params, d_adam) = load("D", &header.discriminator, &header.d_adam)?;
        if !records.is_empty() {
            return Err(Error::Format(format!("{} unexpected records", records.len())));
        }
        Ok(Self {
            config: header.config,
            generator: header.generator,
            discriminator: header.discriminator,
            g_params,
            d_params,
            g_adam,
            d_adam,
            iteration: header.iteration,
            rng_state: header.rng_state,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
