//! The `Volume` type and the SVL1 volume file format.
//!
//! Axes are (x, y, z) = (sagittal, coronal, axial); data is row-major with z
//! fastest. SVL1 layout, little-endian: `"SVL1"`, u32 Dx, Dy, Dz, u32 dtype
//! (0 = f32), then Dx·Dy·Dz f32 values.

use std::path::Path;

use voxstyle_tensor::Array;

use crate::error::{Error, Result};

pub const SVL1_MAGIC: [u8; 4] = *b"SVL1";
pub const SVL1_HEADER: usize = 20;
const DTYPE_F32: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f32>,
    range: (f32, f32),
}

fn min_max(data: &[f32]) -> (f32, f32) {
    data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("volume dims must be positive, got {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} values for dims {dims:?}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume data".into()));
        }
        let range = min_max(&data);
        Ok(Self { dims, data, range })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(min, max)` of the data.
    pub fn intensity_range(&self) -> (f32, f32) {
        self.range
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Accepts `[D, H, W]`, `[1, D, H, W]` or `[1, 1, D, H, W]` arrays.
    pub fn from_array(a: &Array<f32>) -> Result<Self> {
        let s = a.shape();
        let lead = s.len().saturating_sub(3);
        if s.len() < 3 || s[..lead].iter().any(|&e| e != 1) {
            return Err(Error::Shape(format!("cannot view array of shape {s:?} as one volume")));
        }
        Self::new([s[lead], s[lead + 1], s[lead + 2]], a.data().to_vec())
    }

    /// `[1, 1, Dx, Dy, Dz]` array.
    pub fn to_array(&self) -> Array<f32> {
        let [x, y, z] = self.dims;
        Array::from_vec(&[1, 1, x, y, z], self.data.clone()).expect("consistent dims")
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Stacks equally shaped volumes into `[N, 1, Dx, Dy, Dz]`.
pub fn stack(volumes: &[&Volume]) -> Result<Array<f32>> {
    let first = volumes.first().ok_or_else(|| Error::InvalidArgument("cannot stack zero volumes".into()))?;
    let dims = first.dims;
    let mut data = Vec::with_capacity(volumes.len() * first.len());
    for v in volumes {
        if v.dims != dims {
            return Err(Error::Shape(format!("volume dims {:?} differ from {dims:?}", v.dims)));
        }
        data.extend_from_slice(&v.data);
    }
    Ok(Array::from_vec(&[volumes.len(), 1, dims[0], dims[1], dims[2]], data)?)
}

/// Splits `[N, 1, Dx, Dy, Dz]` into volumes.
pub fn unstack(a: &Array<f32>) -> Result<Vec<Volume>> {
    let &[n, 1, x, y, z] = a.shape() else {
        return Err(Error::Shape(format!("expected [N, 1, Dx, Dy, Dz], got {:?}", a.shape())));
    };
    let per = x * y * z;
    (0..n).map(|i| Volume::new([x, y, z], a.data()[i * per..(i + 1) * per].to_vec())).collect()
}

/// Affine map of `[min, max]` onto `[−1, 1]`; constant volumes become zeros.
pub fn normalize_intensity(v: &Volume) -> Volume {
    let (lo, hi) = (v.range.0 as f64, v.range.1 as f64);
    let data = if hi > lo {
        v.data
            .iter()
            .map(|&x| ((2.0 * (x as f64 - lo) / (hi - lo)) - 1.0).clamp(-1.0, 1.0) as f32)
            .collect()
    } else {
        vec![0.0; v.len()]
    };
    Volume::new(v.dims, data).expect("finite by construction")
}

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(SVL1_HEADER + 4 * v.len());
    out.extend_from_slice(&SVL1_MAGIC);
    for d in v.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for x in &v.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < SVL1_HEADER {
        return Err(Error::Truncated {
            needed: SVL1_HEADER,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != SVL1_MAGIC {
        return Err(Error::BadMagic {
            expected: SVL1_MAGIC,
            found: magic,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let dims = [word(0) as usize, word(1) as usize, word(2) as usize];
    let dtype = word(3);
    if dtype != DTYPE_F32 {
        return Err(Error::UnknownDType(dtype));
    }
    if dims.contains(&0) {
        return Err(Error::Malformed(format!("zero extent in dims {dims:?}")));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Malformed(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[SVL1_HEADER..];
    if payload.len() < count {
        return Err(Error::Truncated {
            needed: SVL1_HEADER + count,
            available: bytes.len(),
        });
    }
    if payload.len() > count {
        return Err(Error::Malformed(format!("{} trailing bytes", payload.len() - count)));
    }
    let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Volume::new(dims, data).map_err(|e| match e {
        Error::NonFinite(_) => Error::Malformed("non-finite voxel value".into()),
        e => e,
    })
}

pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_volume(v)).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode_volume(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Every `*.svl` file in `dir`, sorted by file name.
pub fn read_volume_dir(dir: impl AsRef<Path>) -> Result<Vec<Volume>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svl"))
        .collect();
    paths.sort();
    paths.iter().map(read_volume).collect()
}
