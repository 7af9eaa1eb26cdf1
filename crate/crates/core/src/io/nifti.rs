//! Minimal NIfTI-1 (`.nii`, uncompressed) import: dims and f32/i16 voxel
//! data only. Orientation and affine fields are ignored.

use std::path::Path;

use super::volume::Volume;
use crate::error::{Error, Result};

const HEADER: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

/// Decodes a single-file NIfTI-1 image into a volume, applying the intensity
/// scaling when `scl_slope` is non-zero. NIfTI stores x fastest; the result
/// is in this crate's z-fastest layout.
pub fn decode_nifti(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            needed: HEADER,
            available: bytes.len(),
        });
    }
    let le = match (i32::from_le_bytes(bytes[..4].try_into().unwrap()), i32::from_be_bytes(bytes[..4].try_into().unwrap())) {
        (348, _) => true,
        (_, 348) => false,
        _ => {
            return Err(Error::BadMagic {
                expected: 348i32.to_le_bytes(),
                found: bytes[..4].try_into().unwrap(),
            })
        }
    };
    let i16_at = |o: usize| {
        let b: [u8; 2] = bytes[o..o + 2].try_into().unwrap();
        if le {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    };
    let f32_at = |o: usize| {
        let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
        if le {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let rank = i16_at(40);
    if !(3..=7).contains(&rank) {
        return Err(Error::Malformed(format!("NIfTI rank {rank}")));
    }
    let dim = |i: usize| i16_at(40 + 2 * i);
    if (4..=rank as usize).any(|i| dim(i) > 1) {
        return Err(Error::Malformed("only single 3-D volumes are supported".into()));
    }
    let dims = [dim(1), dim(2), dim(3)];
    if dims.iter().any(|&d| d < 1) {
        return Err(Error::Malformed(format!("NIfTI dims {dims:?}")));
    }
    let dims = dims.map(|d| d as usize);
    let datatype = i16_at(70);
    let width = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnknownDType(other as u32)),
    };
    let offset = f32_at(108);
    if !(offset >= HEADER as f32) {
        return Err(Error::Malformed(format!("vox_offset {offset}")));
    }
    let offset = offset as usize;
    let n = dims.iter().product::<usize>();
    let needed = offset + n * width;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let (slope, inter) = (f32_at(112), f32_at(116));
    let scale = |v: f32| if slope != 0.0 && slope.is_finite() { v * slope + inter } else { v };
    let raw = |k: usize| -> f32 {
        let o = offset + k * width;
        match datatype {
            DT_INT16 => i16_at(o) as f32,
            _ => f32_at(o),
        }
    };
    let [dx, dy, dz] = dims;
    let mut data = Vec::with_capacity(n);
    for x in 0..dx {
        for y in 0..dy {
            for z in 0..dz {
                data.push(scale(raw((z * dy + y) * dx + x)));
            }
        }
    }
    Volume::new(dims, data).map_err(|e| match e {
        Error::NonFinite(_) => Error::Malformed("non-finite voxel value".into()),
        e => e,
    })
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode_nifti(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: [i16; 3], datatype: i16) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        h[..4].copy_from_slice(&348i32.to_le_bytes());
        h[40..42].copy_from_slice(&3i16.to_le_bytes());
        for (i, d) in dims.iter().enumerate() {
            h[42 + 2 * i..44 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        h[108..112].copy_from_slice(&352f32.to_le_bytes());
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    #[test]
    fn reorders_x_fastest_to_z_fastest() {
        let mut b = header([2, 1, 3], DT_INT16);
        for k in 0..6i16 {
            b.extend_from_slice(&k.to_le_bytes());
        }
        let v = decode_nifti(&b).unwrap();
        assert_eq!(v.dims(), [2, 1, 3]);
        for x in 0..2 {
            for z in 0..3 {
                assert_eq!(v.at(x, 0, z), (z * 2 + x) as f32);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode_nifti(&[0; 10]), Err(Error::Truncated { .. })));
        let b = header([2, 2, 2], 64);
        assert!(matches!(decode_nifti(&b), Err(Error::UnknownDType(64))));
        let b = header([2, 2, 2], DT_FLOAT32);
        assert!(matches!(decode_nifti(&b), Err(Error::Truncated { .. })));
    }
}
