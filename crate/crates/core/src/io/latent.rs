//! SLT1 latent records: projected or sampled latents with their noise maps.
//!
//! Layout, little-endian: `"SLT1"`, u32 latent count, u32 latent size,
//! count·size f32, u32 noise-map count, then per map u32 Dx, Dy, Dz and
//! Dx·Dy·Dz f32.

use std::path::Path;

use voxstyle_tensor::Array;

use crate::error::{Error, Result};

pub const SLT1_MAGIC: [u8; 4] = *b"SLT1";

#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    /// `[1, latent]` arrays: one shared latent or one per style layer.
    pub w: Vec<Array<f32>>,
    /// `[1, 1, Dx, Dy, Dz]` noise maps; empty when noise is not used.
    pub noise: Vec<Array<f32>>,
}

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_latent(rec: &LatentRecord) -> Result<Vec<u8>> {
    let size = rec.w.first().map_or(0, |w| w.len());
    if rec.w.is_empty() || rec.w.iter().any(|w| w.shape() != [1, size]) {
        return Err(Error::Shape("latent record needs one or more [1, latent] arrays".into()));
    }
    let mut out = SLT1_MAGIC.to_vec();
    put(&mut out, rec.w.len());
    put(&mut out, size);
    for x in rec.w.iter().flat_map(|w| w.data()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    put(&mut out, rec.noise.len());
    for n in &rec.noise {
        let &[1, 1, dx, dy, dz] = n.shape() else {
            return Err(Error::Shape(format!("noise map of shape {:?}", n.shape())));
        };
        for d in [dx, dy, dz] {
            put(&mut out, d);
        }
        for x in n.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a>(&'a [u8], usize);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        match self.1.checked_add(n).filter(|&e| e <= self.0.len()) {
            Some(end) => {
                let s = &self.0[self.1..end];
                self.1 = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                needed: self.1.saturating_add(n),
                available: self.0.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn floats(&mut self, shape: &[usize]) -> Result<Array<f32>> {
        let bytes = shape
            .iter()
            .try_fold(4usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Malformed(format!("dims {shape:?} overflow")))?;
        let data = self.take(bytes)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Array::from_vec(shape, data)?)
    }
}

pub fn decode_latent(bytes: &[u8]) -> Result<LatentRecord> {
    let mut c = Cursor(bytes, 0);
    let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
    if magic != SLT1_MAGIC {
        return Err(Error::BadMagic {
            expected: SLT1_MAGIC,
            found: magic,
        });
    }
    let (count, size) = (c.u32()?, c.u32()?);
    if count == 0 || size == 0 {
        return Err(Error::Malformed("empty latent record".into()));
    }
    let mut w = Vec::new();
    for _ in 0..count {
        w.push(c.floats(&[1, size])?);
    }
    let maps = c.u32()?;
    let mut noise = Vec::new();
    for _ in 0..maps {
        let dims = [c.u32()?, c.u32()?, c.u32()?];
        if dims.contains(&0) {
            return Err(Error::Malformed(format!("noise map dims {dims:?}")));
        }
        noise.push(c.floats(&[1, 1, dims[0], dims[1], dims[2]])?);
    }
    if c.1 != bytes.len() {
        return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - c.1)));
    }
    if w.iter().chain(&noise).any(|a| !a.is_finite()) {
        return Err(Error::Malformed("non-finite latent value".into()));
    }
    Ok(LatentRecord { w, noise })
}

pub fn write_latent(rec: &LatentRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_latent(rec)?).map_err(|e| Error::io(path, e))
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentRecord> {
    let path = path.as_ref();
    decode_latent(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
