//! SCK1 checkpoints: model configuration, every network and optimizer tensor,
//! and the scalar training state.
//!
//! Layout, little-endian: `"SCK1"`, u32 version, u32 length + config text
//! (`key=value` lines), u32 tensor count, then per tensor u32 name length,
//! UTF-8 name, u32 rank, u32 dims, f32 data; u32 length + training-state
//! block; u32 CRC-32 of all preceding bytes.

use std::path::Path;

use voxstyle_tensor::Array;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Generator, ParamSet, ParamSpec};
use crate::training::{Adam, AdamConfig, PathLengthState, TrainState};

pub const SCK1_MAGIC: [u8; 4] = *b"SCK1";
pub const SCK1_VERSION: u32 = 1;
const MAX_RANK: usize = 8;
const STATE_BLOCK: usize = 8 * 7 + 2 * (8 * 5);

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub state: TrainState,
}

/// Which network a tensor group mirrors.
#[derive(Clone, Copy)]
enum Net {
    G,
    D,
}

const GROUPS: [(&str, Net); 7] = [
    ("g", Net::G),
    ("d", Net::D),
    ("ema", Net::G),
    ("adam_g.m", Net::G),
    ("adam_g.v", Net::G),
    ("adam_d.m", Net::D),
    ("adam_d.v", Net::D),
];

fn specs(cfg: &ModelConfig) -> Result<(Vec<ParamSpec>, Vec<ParamSpec>)> {
    Ok((Generator::new(cfg)?.specs(), Discriminator::new(cfg)?.specs()))
}

impl Checkpoint {
    fn groups(&self) -> [&ParamSet<f32>; 7] {
        let s = &self.state;
        [&s.g, &s.d, &s.ema, &s.adam_g.m, &s.adam_g.v, &s.adam_d.m, &s.adam_d.v]
    }

    /// Checks every tensor against the networks built from `cfg`, reporting
    /// the first unknown, missing or mis-shaped tensor.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let (g, d) = specs(cfg)?;
        for ((_, net), set) in GROUPS.iter().zip(self.groups()) {
            set.check_specs(match net {
                Net::G => &g,
                Net::D => &d,
            })?;
        }
        Ok(())
    }

    /// Checks the checkpoint against its own configuration.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.check_against(&self.config)
    }

    /// EMA generator weights, the set used for sampling and evaluation.
    pub fn ema(&self) -> &ParamSet<f32> {
        &self.state.ema
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let v = u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("length {n} does not fit in u32")))?;
    put_u32(out, v);
    Ok(())
}

fn put_adam(out: &mut Vec<u8>, a: &Adam) {
    for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&a.step.to_le_bytes());
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&SCK1_MAGIC);
    put_u32(&mut out, SCK1_VERSION);
    let cfg = ckpt.config.to_kv();
    put_len(&mut out, cfg.len())?;
    out.extend_from_slice(cfg.as_bytes());
    let groups = ckpt.groups();
    put_len(&mut out, groups.iter().map(|g| g.len()).sum())?;
    for ((prefix, _), set) in GROUPS.iter().zip(groups) {
        for (name, a) in set.iter() {
            let full = format!("{prefix}/{name}");
            put_len(&mut out, full.len())?;
            out.extend_from_slice(full.as_bytes());
            put_len(&mut out, a.rank())?;
            for &d in a.shape() {
                put_len(&mut out, d)?;
            }
            for x in a.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let s = &ckpt.state;
    let mut block = Vec::with_capacity(STATE_BLOCK);
    block.extend_from_slice(&s.step.to_le_bytes());
    block.extend_from_slice(&s.seed.to_le_bytes());
    for v in [s.path_length.mean, s.path_length.decay, s.path_length.weight] {
        block.extend_from_slice(&v.to_le_bytes());
    }
    block.extend_from_slice(&s.path_length.interval.to_le_bytes());
    block.extend_from_slice(&s.last_pl_penalty.to_le_bytes());
    put_adam(&mut block, &s.adam_g);
    put_adam(&mut block, &s.adam_d);
    debug_assert_eq!(block.len(), STATE_BLOCK);
    put_len(&mut out, block.len())?;
    out.extend_from_slice(&block);
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn adam_header(&mut self) -> Result<(AdamConfig, u64)> {
        let config = AdamConfig {
            lr: self.f64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            eps: self.f64()?,
        };
        Ok((config, self.u64()?))
    }
}

fn utf8(bytes: &[u8], what: &str) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Malformed(format!("{what} is not valid UTF-8")))
}

/// Parses and validates an SCK1 byte stream. Structural problems are reported
/// before tensor-name problems, and the checksum is verified last.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != SCK1_MAGIC {
        return Err(Error::BadMagic {
            expected: SCK1_MAGIC,
            found: magic,
        });
    }
    let version = r.u32()?;
    if version != SCK1_VERSION {
        return Err(Error::Version(version));
    }
    let n = r.u32()? as usize;
    let config = ModelConfig::from_kv(&utf8(r.take(n)?, "config block")?)
        .map_err(|e| Error::Malformed(format!("config block: {e}")))?;
    config.validate().map_err(|e| Error::Malformed(format!("config block: {e}")))?;
    let (g_specs, d_specs) = specs(&config)?;

    let count = r.u32()? as usize;
    let mut tensors: Vec<(String, Array<f32>)> = Vec::with_capacity(count.min(r.remaining() / 12));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = utf8(r.take(n)?, "tensor name")?;
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(Error::Malformed(format!("tensor {name:?} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let bytes = shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Malformed(format!("tensor {name:?} dims {shape:?} overflow")))?;
        let data: Vec<f32> = r.take(bytes)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push((name, Array::from_vec(&shape, data)?));
    }

    let block = r.u32()? as usize;
    if block != STATE_BLOCK {
        return Err(Error::Malformed(format!("training-state block of {block} bytes, expected {STATE_BLOCK}")));
    }
    let step = r.u64()?;
    let seed = r.u64()?;
    let path_length = PathLengthState {
        mean: r.f64()?,
        decay: r.f64()?,
        weight: r.f64()?,
        interval: r.u64()?,
    };
    let last_pl_penalty = r.f64()?;
    let (adam_g_cfg, adam_g_step) = r.adam_header()?;
    let (adam_d_cfg, adam_d_step) = r.adam_header()?;
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!("{} trailing bytes", r.remaining())));
    }

    // Place every tensor in its group, in network-spec order.
    let mut slots: Vec<Vec<Option<Array<f32>>>> = GROUPS
        .iter()
        .map(|(_, net)| match net {
            Net::G => vec![None; g_specs.len()],
            Net::D => vec![None; d_specs.len()],
        })
        .collect();
    for (full, a) in tensors {
        let found = full.split_once('/').and_then(|(prefix, name)| {
            let gi = GROUPS.iter().position(|(p, _)| *p == prefix)?;
            let list = match GROUPS[gi].1 {
                Net::G => &g_specs,
                Net::D => &d_specs,
            };
            let si = list.iter().position(|s| s.name == name)?;
            Some((gi, si, list))
        });
        let (gi, si, list) = found.ok_or_else(|| Error::UnknownTensor(full.clone()))?;
        if a.shape() != list[si].shape.as_slice() {
            return Err(Error::TensorDims {
                name: full,
                expected: list[si].shape.clone(),
                found: a.shape().to_vec(),
            });
        }
        if slots[gi][si].replace(a).is_some() {
            return Err(Error::Malformed(format!("duplicate tensor {full:?}")));
        }
    }
    let mut sets = Vec::with_capacity(GROUPS.len());
    for ((prefix, net), group) in GROUPS.iter().zip(slots) {
        let list = match net {
            Net::G => &g_specs,
            Net::D => &d_specs,
        };
        let mut set = ParamSet::default();
        for (spec, slot) in list.iter().zip(group) {
            let a = slot.ok_or_else(|| Error::MissingTensor(format!("{prefix}/{}", spec.name)))?;
            set.push(&spec.name, a)?;
        }
        sets.push(set);
    }

    let computed = crc32fast::hash(&bytes[..body_end]);
    if computed != stored {
        return Err(Error::Checksum { stored, computed });
    }
    let mut it = sets.into_iter();
    let mut next = || it.next().unwrap();
    let (g, d, ema) = (next(), next(), next());
    let adam_g = Adam {
        config: adam_g_cfg,
        step: adam_g_step,
        m: next(),
        v: next(),
    };
    let adam_d = Adam {
        config: adam_d_cfg,
        step: adam_d_step,
        m: next(),
        v: next(),
    };
    Ok(Checkpoint {
        config,
        state: TrainState {
            step,
            seed,
            g,
            d,
            ema,
            adam_g,
            adam_d,
            path_length,
            last_pl_penalty,
        },
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
