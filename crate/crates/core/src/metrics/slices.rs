use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use super::frechet::{frechet_distance, mean_cov};
use crate::error::{Error, Result};
use crate::io::Volume;
use crate::rng::{stream, Purpose};

/// Anatomical plane; x is sagittal, y coronal, z axial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    Sagittal,
    Axial,
    Coronal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Sagittal, Plane::Axial, Plane::Coronal];

    pub fn name(self) -> &'static str {
        match self {
            Plane::Sagittal => "sagittal",
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Plane {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Plane::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown plane {s:?} (sagittal, axial, coronal)")))
    }
}

/// Row-major 2-D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

/// The slice through index floor(extent/2) of the plane's axis. Sagittal
/// slices are [Dy, Dz], coronal [Dx, Dz], axial [Dx, Dy].
pub fn extract_middle_slice(v: &Volume, plane: Plane) -> Slice {
    let [dx, dy, dz] = v.dims();
    let (rows, cols) = match plane {
        Plane::Sagittal => (dy, dz),
        Plane::Coronal => (dx, dz),
        Plane::Axial => (dx, dy),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(match plane {
                Plane::Sagittal => v.at(dx / 2, r, c),
                Plane::Coronal => v.at(r, dy / 2, c),
                Plane::Axial => v.at(r, c, dz / 2),
            });
        }
    }
    Slice { rows, cols, data }
}

/// Maps 2-D slices to fixed-length feature vectors.
pub trait FeatureExtractor {
    /// Name and version; scores are comparable only under the same string.
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn features(&self, slice: &Slice) -> Vec<f64>;
}

/// `tanh` of a seeded Gaussian random projection of the flattened slice,
/// scaled by 1/sqrt(pixels).
#[derive(Debug, Clone)]
pub struct RandProj {
    seed: u64,
    dim: usize,
}

pub const RANDPROJ_NAME: &str = "randproj-v1";
pub const RANDPROJ_DIM: usize = 64;
const RANDPROJ_SEED: u64 = 0x5eed_0f_f1d;

impl Default for RandProj {
    fn default() -> Self {
        Self {
            seed: RANDPROJ_SEED,
            dim: RANDPROJ_DIM,
        }
    }
}

impl FeatureExtractor for RandProj {
    fn name(&self) -> &str {
        RANDPROJ_NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, slice: &Slice) -> Vec<f64> {
        let n = slice.data.len();
        let scale = 1.0 / (n as f64).sqrt();
        (0..self.dim)
            .map(|k| {
                let mut rng = stream(self.seed, Purpose::Extractor, k as u64);
                let mut acc = 0.0;
                for &p in &slice.data {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    acc += g * p as f64;
                }
                (acc * scale).tanh()
            })
            .collect()
    }
}

/// Fréchet distance between extractor features of the middle slices of two
/// volume sets.
pub fn slice_fd(a: &[Volume], b: &[Volume], plane: Plane, extractor: &dyn FeatureExtractor) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric("slice FD needs non-empty sets".into()));
    }
    let f = extractor.dim();
    if a.len() <= f || b.len() <= f {
        log::warn!(
            "slice FD with {} and {} samples for {f} features: covariance is rank-deficient",
            a.len(),
            b.len()
        );
    }
    let feats = |set: &[Volume]| -> Vec<Vec<f64>> {
        set.iter().map(|v| extractor.features(&extract_middle_slice(v, plane))).collect()
    };
    let (m1, s1) = mean_cov(&feats(a))?;
    let (m2, s2) = mean_cov(&feats(b))?;
    frechet_distance(&m1, &s1, &m2, &s2)
}
