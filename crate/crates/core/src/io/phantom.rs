//! Seeded procedural head phantoms used as a desk-scale training set.
//!
//! Each volume is a deformed head ellipsoid with a bright scalp layer, a
//! cortex shell, a mid-gray interior and a dark central ventricle, multiplied
//! by a smooth bias field, with Gaussian noise added, then normalized to
//! [−1, 1]. Item k depends only on (seed, k).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::volume::{normalize_intensity, write_volume, Volume};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const MIN_PHANTOM_EXTENT: usize = 16;
pub const SIDECAR_NAME: &str = "phantoms.json";

pub const BACKGROUND: f64 = 0.0;
pub const HEAD: f64 = 0.7;
pub const CORTEX: f64 = 0.9;
pub const INTERIOR: f64 = 0.5;
pub const VENTRICLE: f64 = 0.1;

/// Inclusive range `[lo, hi]`; `lo == hi` fixes the factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        self.lo + (self.hi - self.lo) * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub count: usize,
    pub dims: [usize; 3],
    /// Head semi-axes as fractions of the half-extents.
    pub head_radius: Range,
    /// Scalp thickness as a fraction of the head radius.
    pub scalp_thickness: Range,
    /// Cortex shell thickness as a fraction of the head radius.
    pub cortex_thickness: Range,
    /// Ventricle semi-axes as fractions of the head semi-axes.
    pub ventricle_radius: Range,
    /// Amplitude of the smooth coordinate warp, in normalized units.
    pub deformation: Range,
    /// Peak relative deviation of the multiplicative bias field.
    pub bias_field: Range,
    /// Standard deviation of additive noise before normalization.
    pub noise_std: f64,
}

impl PhantomSpec {
    pub fn new(seed: u64, count: usize, dims: [usize; 3]) -> Self {
        Self {
            seed,
            count,
            dims,
            head_radius: Range::new(0.78, 0.92),
            scalp_thickness: Range::new(0.06, 0.1),
            cortex_thickness: Range::new(0.08, 0.14),
            ventricle_radius: Range::new(0.12, 0.3),
            deformation: Range::new(0.0, 0.06),
            bias_field: Range::new(0.0, 0.1),
            noise_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < MIN_PHANTOM_EXTENT) {
            return Err(Error::InvalidArgument(format!(
                "dims too small: {:?} (every extent must be ≥ {MIN_PHANTOM_EXTENT})",
                self.dims
            )));
        }
        let ranges = [
            ("head_radius", self.head_radius),
            ("scalp_thickness", self.scalp_thickness),
            ("cortex_thickness", self.cortex_thickness),
            ("ventricle_radius", self.ventricle_radius),
            ("deformation", self.deformation),
            ("bias_field", self.bias_field),
        ];
        for (name, r) in ranges {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo >= 0.0 && r.lo <= r.hi) {
                return Err(Error::InvalidArgument(format!("{name} range [{}, {}] is empty or invalid", r.lo, r.hi)));
            }
        }
        if self.head_radius.hi > 1.0 || self.head_radius.lo <= 0.0 {
            return Err(Error::InvalidArgument("head_radius must lie in (0, 1]".into()));
        }
        if self.scalp_thickness.hi + self.cortex_thickness.hi >= 1.0 || self.ventricle_radius.hi >= 1.0 {
            return Err(Error::InvalidArgument("scalp, cortex and ventricle must fit inside the head".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument("noise_std must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

/// Generative factors drawn for one phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomFactors {
    pub index: usize,
    pub center: [f64; 3],
    pub head_radius: [f64; 3],
    pub scalp_thickness: f64,
    pub cortex_thickness: f64,
    pub ventricle_radius: f64,
    pub deformation: f64,
    pub bias_field: f64,
}

struct Waves {
    freq: [f64; 3],
    phase: [f64; 3],
}

impl Waves {
    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut w = Waves {
            freq: [0.0; 3],
            phase: [0.0; 3],
        };
        for i in 0..3 {
            w.freq[i] = rng.gen_range(0.5..1.5);
            w.phase[i] = rng.gen_range(0.0..2.0 * PI);
        }
        w
    }
}

/// Unnormalized phantom `index` and its factors.
pub fn render_phantom(spec: &PhantomSpec, index: usize) -> Result<(Volume, PhantomFactors)> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Purpose::Phantom, index as u64);
    let mut center = [0.0; 3];
    let mut radius = [0.0; 3];
    for i in 0..3 {
        center[i] = rng.gen_range(-0.04..0.04);
        radius[i] = spec.head_radius.draw(&mut rng);
    }
    let scalp = spec.scalp_thickness.draw(&mut rng);
    let cortex = spec.cortex_thickness.draw(&mut rng);
    let vent = spec.ventricle_radius.draw(&mut rng);
    let deform = spec.deformation.draw(&mut rng);
    let bias = spec.bias_field.draw(&mut rng);
    let warp = Waves::draw(&mut rng);
    let field = Waves::draw(&mut rng);

    let [dx, dy, dz] = spec.dims;
    let coord = |i: usize, n: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
    let mut data = Vec::with_capacity(dx * dy * dz);
    for x in 0..dx {
        for y in 0..dy {
            for z in 0..dz {
                let u = [coord(x, dx), coord(y, dy), coord(z, dz)];
                let mut rho2 = 0.0;
                let mut vent2 = 0.0;
                for a in 0..3 {
                    let b = (a + 1) % 3;
                    let p = u[a] + deform * (PI * warp.freq[a] * u[b] + warp.phase[a]).sin() - center[a];
                    rho2 += (p / radius[a]).powi(2);
                    // Ventricles are elongated along y.
                    let stretch = if a == 1 { 1.6 } else { 1.0 };
                    vent2 += (p / (radius[a] * vent * stretch)).powi(2);
                }
                let rho = rho2.sqrt();
                let tissue = if rho > 1.0 {
                    BACKGROUND
                } else if rho > 1.0 - scalp {
                    HEAD
                } else if rho > 1.0 - scalp - cortex {
                    CORTEX
                } else if vent > 0.0 && vent2 <= 1.0 {
                    VENTRICLE
                } else {
                    INTERIOR
                };
                let f = 1.0 + bias * (0..3).map(|a| (PI * field.freq[a] * u[a] + field.phase[a]).cos()).sum::<f64>() / 3.0;
                let n: f64 = rng.sample(StandardNormal);
                data.push((tissue * f + spec.noise_std * n) as f32);
            }
        }
    }
    let factors = PhantomFactors {
        index,
        center,
        head_radius: radius,
        scalp_thickness: scalp,
        cortex_thickness: cortex,
        ventricle_radius: vent,
        deformation: deform,
        bias_field: bias,
    };
    Ok((Volume::new(spec.dims, data)?, factors))
}

/// All `spec.count` phantoms, normalized to [−1, 1].
pub fn phantom_generate(spec: &PhantomSpec) -> Result<(Vec<Volume>, Vec<PhantomFactors>)> {
    spec.validate()?;
    let mut vols = Vec::with_capacity(spec.count);
    let mut factors = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let (v, f) = render_phantom(spec, k)?;
        vols.push(normalize_intensity(&v));
        factors.push(f);
    }
    Ok((vols, factors))
}

#[derive(Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: PhantomSpec,
    pub files: Vec<String>,
    pub factors: Vec<PhantomFactors>,
}

pub fn phantom_file_name(index: usize) -> String {
    format!("phantom_{index:05}.svl")
}

/// Writes the phantoms as SVL1 files plus a JSON sidecar of their factors.
/// Returns the paths written, sidecar last.
pub fn write_phantom_dataset(spec: &PhantomSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    let (vols, factors) = phantom_generate(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(vols.len() + 1);
    let mut files = Vec::with_capacity(vols.len());
    for (k, v) in vols.iter().enumerate() {
        let name = phantom_file_name(k);
        let path = dir.join(&name);
        write_volume(v, &path)?;
        paths.push(path);
        files.push(name);
    }
    let sidecar = Sidecar {
        spec: spec.clone(),
        files,
        factors,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let path = dir.join(SIDECAR_NAME);
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    paths.push(path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PhantomSpec {
        PhantomSpec::new(3, 4, [20, 24, 28])
    }

    #[test]
    fn deterministic_and_normalized() {
        let (a, fa) = phantom_generate(&spec()).unwrap();
        let (b, fb) = phantom_generate(&spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        for v in &a {
            let (lo, hi) = v.intensity_range();
            assert_eq!((lo, hi), (-1.0, 1.0));
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn item_is_independent_of_count() {
        let mut s = spec();
        let (few, _) = phantom_generate(&s).unwrap();
        s.count = 9;
        let (many, _) = phantom_generate(&s).unwrap();
        assert_eq!(few[..], many[..4]);
    }

    #[test]
    fn too_small_and_empty_ranges_rejected() {
        let mut s = spec();
        s.dims = [8, 8, 8];
        assert!(s.validate().unwrap_err().to_string().contains("dims too small"));
        let mut s = spec();
        s.ventricle_radius = Range::new(0.3, 0.2);
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_ventricle_leaves_no_dark_center() {
        let mut s = spec();
        s.ventricle_radius = Range::new(0.0, 0.0);
        s.count = 6;
        for k in 0..s.count {
            let (v, f) = render_phantom(&s, k).unwrap();
            let [dx, dy, dz] = v.dims();
            let mut lo = f32::INFINITY;
            for x in dx / 2 - 2..dx / 2 + 2 {
                for y in dy / 2 - 2..dy / 2 + 2 {
                    for z in dz / 2 - 2..dz / 2 + 2 {
                        lo = lo.min(v.at(x, y, z));
                    }
                }
            }
            let floor = INTERIOR * (1.0 - f.bias_field) - 6.0 * s.noise_std;
            assert!(lo as f64 > floor && floor > VENTRICLE + 0.1, "item {k}: {lo}");
        }
    }
}
