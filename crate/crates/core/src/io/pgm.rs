//! Binary PGM (P5) export of middle slices.

use std::path::Path;

use super::volume::Volume;
use crate::error::{Error, Result};
use crate::metrics::{extract_middle_slice, Plane, Slice};

/// Maps [−1, 1] to 0..=255 (clamping outside values) and encodes as P5.
/// The image is `slice.cols` wide and `slice.rows` high.
pub fn encode_pgm(slice: &Slice) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", slice.cols, slice.rows).into_bytes();
    out.extend(slice.data.iter().map(|&v| ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn export_slice_image(v: &Volume, plane: Plane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(&extract_middle_slice(v, plane))).map_err(|e| Error::io(path, e))
}
