//! Model hyperparameters, named presets and the flat `key=value` file format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Extent of the constant input block, (x, y, z).
    pub base_shape: [usize; 3],
    /// Number of resolutions; the output is `base_shape · 2^(levels−1)`.
    pub levels: usize,
    pub fmap_depth: usize,
    pub latent_size: usize,
    pub mapping_layers: usize,
    pub mapping_fmaps: usize,
    /// One minibatch size per level, coarsest first.
    pub minibatch_schedule: Vec<usize>,
    pub lrelu_alpha: f64,
    pub mixing_prob: f64,
    pub noise_per_layer: bool,
}

pub const PRESETS: [&str; 6] = ["2mm-fd96", "2mm-fd64", "2mm-fd32", "2mm-fd16", "1mm-fd16", "desk-fd16-l3"];

pub fn num_style_layers(levels: usize) -> usize {
    2 * levels - 1
}

impl ModelConfig {
    fn table_row(levels: usize, depth: usize, latent: usize, mapping: usize, schedule: &[usize]) -> Self {
        Self {
            base_shape: [5, 6, 7],
            levels,
            fmap_depth: depth,
            latent_size: latent,
            mapping_layers: 8,
            mapping_fmaps: mapping,
            minibatch_schedule: schedule.to_vec(),
            lrelu_alpha: 0.2,
            mixing_prob: 0.9,
            noise_per_layer: true,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let two_mm = [32, 32, 32, 16, 16];
        let one_mm = [64, 64, 64, 32, 16, 16];
        let cfg = match name {
            "2mm-fd96" => Self::table_row(5, 96, 96, 96, &two_mm),
            "2mm-fd64" => Self::table_row(5, 64, 64, 64, &two_mm),
            "2mm-fd32" => Self::table_row(5, 32, 128, 128, &two_mm),
            "2mm-fd16" => Self::table_row(5, 16, 64, 64, &two_mm),
            "1mm-fd16" => Self::table_row(6, 16, 64, 32, &one_mm),
            "desk-fd16-l3" => Self::table_row(3, 16, 32, 32, &[8, 8, 4]),
            _ => return Err(Error::Config(format!("unknown preset {name:?} (known: {})", PRESETS.join(", ")))),
        };
        Ok(cfg)
    }

    /// Smallest useful configuration, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            base_shape: [2, 2, 2],
            levels: 2,
            fmap_depth: 4,
            latent_size: 4,
            mapping_layers: 2,
            mapping_fmaps: 4,
            minibatch_schedule: vec![2, 2],
            lrelu_alpha: 0.2,
            mixing_prob: 0.9,
            noise_per_layer: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if self.base_shape.contains(&0) {
            return bad(format!("base_shape has a zero extent: {:?}", self.base_shape));
        }
        if self.fmap_depth == 0 || self.latent_size == 0 || self.mapping_fmaps == 0 || self.mapping_layers == 0 {
            return bad("fmap_depth, latent_size, mapping_fmaps and mapping_layers must be >= 1".into());
        }
        if self.minibatch_schedule.len() != self.levels {
            return bad(format!(
                "minibatch_schedule has {} entries, expected one per level ({})",
                self.minibatch_schedule.len(),
                self.levels
            ));
        }
        if self.minibatch_schedule.contains(&0) {
            return bad("minibatch sizes must be >= 1".into());
        }
        if !(self.lrelu_alpha > 0.0 && self.lrelu_alpha < 1.0) {
            return bad(format!("lrelu_alpha must lie in (0, 1), got {}", self.lrelu_alpha));
        }
        if !(0.0..=1.0).contains(&self.mixing_prob) {
            return bad(format!("mixing_prob must lie in [0, 1], got {}", self.mixing_prob));
        }
        Ok(())
    }

    pub fn num_style_layers(&self) -> usize {
        num_style_layers(self.levels)
    }

    /// Spatial extent of level `level` (0 = base).
    pub fn level_shape(&self, level: usize) -> [usize; 3] {
        self.base_shape.map(|b| b << level)
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.level_shape(self.levels - 1)
    }

    /// Spatial extent of style layer `i`.
    pub fn layer_shape(&self, i: usize) -> [usize; 3] {
        self.level_shape(i.div_ceil(2))
    }

    /// Minibatch size used for training at the final resolution.
    pub fn minibatch(&self) -> usize {
        self.minibatch_schedule[self.levels - 1]
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let [x, y, z] = self.base_shape;
        let sched: Vec<String> = self.minibatch_schedule.iter().map(|v| v.to_string()).collect();
        writeln!(s, "base_shape={x}x{y}x{z}").unwrap();
        writeln!(s, "levels={}", self.levels).unwrap();
        writeln!(s, "fmap_depth={}", self.fmap_depth).unwrap();
        writeln!(s, "latent_size={}", self.latent_size).unwrap();
        writeln!(s, "mapping_layers={}", self.mapping_layers).unwrap();
        writeln!(s, "mapping_fmaps={}", self.mapping_fmaps).unwrap();
        writeln!(s, "minibatch_schedule={}", sched.join(",")).unwrap();
        writeln!(s, "lrelu_alpha={}", self.lrelu_alpha).unwrap();
        writeln!(s, "mixing_prob={}", self.mixing_prob).unwrap();
        writeln!(s, "noise_per_layer={}", self.noise_per_layer).unwrap();
        s
    }

    /// Parses `key=value` lines. A `preset=` line (if any) supplies defaults;
    /// other keys override them; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, name)) => Self::preset(name)?,
            None => Self::table_row(1, 0, 0, 0, &[]),
        };
        let mut seen = Vec::new();
        for (k, v) in &pairs {
            if seen.contains(k) {
                return Err(Error::Config(format!("duplicate key {k:?}")));
            }
            seen.push(k.clone());
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
        };
        let real = |v: &str| -> Result<f64> { v.parse().map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}"))) };
        match key {
            "preset" => {}
            "base_shape" => self.base_shape = parse_dims(value)?,
            "levels" => self.levels = num(value)?,
            "fmap_depth" => self.fmap_depth = num(value)?,
            "latent_size" => self.latent_size = num(value)?,
            "mapping_layers" => self.mapping_layers = num(value)?,
            "mapping_fmaps" => self.mapping_fmaps = num(value)?,
            "minibatch_schedule" => {
                self.minibatch_schedule = value.split(',').map(|v| num(v.trim())).collect::<Result<_>>()?;
            }
            "lrelu_alpha" => self.lrelu_alpha = real(value)?,
            "mixing_prob" => self.mixing_prob = real(value)?,
            "noise_per_layer" => {
                self.noise_per_layer = value
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: expected true or false, got {value:?}")))?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

/// Parses `AxBxC` extents.
pub fn parse_dims(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split('x').collect();
    let err = || Error::Config(format!("expected dims like 20x24x28, got {s:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| err())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for name in PRESETS {
            let cfg = ModelConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg, "{name}");
        }
        assert!(ModelConfig::preset("3mm").is_err());
    }

    #[test]
    fn output_shapes() {
        let mut cfg = ModelConfig::preset("2mm-fd96").unwrap();
        assert_eq!(cfg.output_shape(), [80, 96, 112]);
        cfg.levels = 6;
        assert_eq!(cfg.output_shape(), [160, 192, 224]);
        assert_eq!(ModelConfig::preset("desk-fd16-l3").unwrap().output_shape(), [20, 24, 28]);
    }

    #[test]
    fn style_layer_counts_and_shapes() {
        assert_eq!(num_style_layers(1), 1);
        assert_eq!(num_style_layers(3), 5);
        assert_eq!(num_style_layers(5), 9);
        let cfg = ModelConfig::preset("desk-fd16-l3").unwrap();
        let shapes: Vec<_> = (0..5).map(|i| cfg.layer_shape(i)).collect();
        assert_eq!(shapes, vec![[5, 6, 7], [10, 12, 14], [10, 12, 14], [20, 24, 28], [20, 24, 28]]);
    }

    #[test]
    fn kv_overrides_and_rejects() {
        let cfg = ModelConfig::from_kv("preset=2mm-fd16\n# comment\nfmap_depth = 8\n").unwrap();
        assert_eq!(cfg.fmap_depth, 8);
        assert_eq!(cfg.latent_size, 64);
        assert!(ModelConfig::from_kv("preset=2mm-fd16\ncolour=blue\n").is_err());
        assert!(ModelConfig::from_kv("preset=2mm-fd16\nlevels=4\n").is_err());
        assert!(ModelConfig::from_kv("preset=2mm-fd16\nlevels=5\nlevels=5\n").is_err());
        assert!(ModelConfig::from_kv("fmap_depth=4\n").is_err());
    }

    #[test]
    fn dims_parsing() {
        assert_eq!(parse_dims("20x24x28").unwrap(), [20, 24, 28]);
        assert!(parse_dims("20x24").is_err());
        assert!(parse_dims("ax2x3").is_err());
    }
}
