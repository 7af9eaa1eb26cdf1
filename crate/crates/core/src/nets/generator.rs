use voxstyle_tensor::ops::{dense, upsample_nearest3d};
use voxstyle_tensor::{Array, Scalar, Tensor};

use super::layers::{affine, modulated_conv, pixel_norm, DEFAULT_EPS, LRELU_GAIN};
use super::params::{Bound, Init, ParamSet, ParamSpec};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const MAPPING_LR_MUL: f64 = 0.01;
pub(crate) const GENERATOR_SALT: u64 = 1;

/// How noise inputs are chosen for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// No noise is added.
    Zero,
    /// One map per layer from `seed`, shared by every sample and every call.
    Fixed(u64),
    /// Independent maps per sample, drawn from the `(seed, index)` stream.
    Random { seed: u64, index: u64 },
}

/// Per-style-layer noise maps, `[N or 1, 1, d, h, w]`; `None` adds nothing.
#[derive(Clone)]
pub struct NoiseMaps<T: Scalar> {
    pub maps: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> NoiseMaps<T> {
    pub fn none(cfg: &ModelConfig) -> Self {
        Self {
            maps: vec![None; cfg.num_style_layers()],
        }
    }

    pub fn new(cfg: &ModelConfig, batch: usize, mode: NoiseMode) -> Self {
        if !cfg.noise_per_layer {
            return Self::none(cfg);
        }
        let (seed, purpose, base, n) = match mode {
            NoiseMode::Zero => return Self::none(cfg),
            NoiseMode::Fixed(seed) => (seed, Purpose::ConstNoise, 0, 1),
            NoiseMode::Random { seed, index } => (seed, Purpose::Noise, index, batch),
        };
        let mut rng = stream(seed, purpose, base);
        let maps = (0..cfg.num_style_layers())
            .map(|i| {
                let [d, h, w] = cfg.layer_shape(i);
                Some(Tensor::constant(Array::randn(&[n, 1, d, h, w], 1.0, &mut rng)))
            })
            .collect();
        Self { maps }
    }

    pub fn from_arrays(maps: Vec<Array<T>>) -> Self {
        Self {
            maps: maps.into_iter().map(|a| Some(Tensor::constant(a))).collect(),
        }
    }
}

/// Result of a synthesis pass with the output of every style layer kept.
pub struct SynthesisTrace<T: Scalar> {
    pub image: Tensor<T>,
    pub activations: Vec<Tensor<T>>,
}

/// Style-based generator: mapping network plus synthesis network.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: ModelConfig,
}

impl Generator {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Number of per-layer latents consumed by synthesis; the output
    /// convolution reuses the last one.
    pub fn num_ws(&self) -> usize {
        self.cfg.num_style_layers()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let c = &self.cfg;
        let (z, f, ch) = (c.latent_size, c.mapping_fmaps, c.fmap_depth);
        let mut v = Vec::new();
        for i in 0..c.mapping_layers {
            let fan_in = if i == 0 { z } else { f };
            let fan_out = if i + 1 == c.mapping_layers { z } else { f };
            v.push(ParamSpec::new(format!("mapping.{i}.weight"), &[fan_out, fan_in], Init::Normal(1.0 / MAPPING_LR_MUL)));
            v.push(ParamSpec::new(format!("mapping.{i}.bias"), &[fan_out], Init::Const(0.0)));
        }
        let [bd, bh, bw] = c.base_shape;
        v.push(ParamSpec::new("const", &[1, ch, bd, bh, bw], Init::Normal(1.0)));
        for i in 0..c.num_style_layers() {
            v.push(ParamSpec::new(format!("layer{i}.affine.weight"), &[ch, z], Init::Normal(1.0)));
            v.push(ParamSpec::new(format!("layer{i}.affine.bias"), &[ch], Init::Const(1.0)));
            v.push(ParamSpec::new(format!("layer{i}.conv.weight"), &[ch, ch, 3, 3, 3], Init::Normal(1.0)));
            v.push(ParamSpec::new(format!("layer{i}.conv.bias"), &[ch], Init::Const(0.0)));
            if c.noise_per_layer {
                v.push(ParamSpec::new(format!("layer{i}.noise_strength"), &[1], Init::Const(0.0)));
            }
        }
        v.push(ParamSpec::new("out.affine.weight", &[ch, z], Init::Normal(1.0)));
        v.push(ParamSpec::new("out.affine.bias", &[ch], Init::Const(1.0)));
        v.push(ParamSpec::new("out.conv.weight", &[1, ch, 1, 1, 1], Init::Normal(1.0)));
        v.push(ParamSpec::new("out.conv.bias", &[1], Init::Const(0.0)));
        v
    }

    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        ParamSet::init(&self.specs(), seed, GENERATOR_SALT)
    }

    /// `z [N, latent] → w [N, latent]`.
    pub fn mapping<T: Scalar>(&self, p: &Bound<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
        if z.shape().len() != 2 || z.shape()[1] != self.cfg.latent_size {
            return Err(Error::Shape(format!(
                "latent has shape {:?}, expected [N, {}]",
                z.shape(),
                self.cfg.latent_size
            )));
        }
        let mut x = pixel_norm(z, DEFAULT_EPS)?;
        for i in 0..self.cfg.mapping_layers {
            let w = p.get(&format!("mapping.{i}.weight"))?;
            let b = p.get(&format!("mapping.{i}.bias"))?;
            x = dense(&x, w, Some(b), MAPPING_LR_MUL, LRELU_GAIN)?.leaky_relu(self.cfg.lrelu_alpha)?;
        }
        Ok(x)
    }

    fn style_layer<T: Scalar>(
        &self,
        p: &Bound<T>,
        i: usize,
        x: &Tensor<T>,
        w: &Tensor<T>,
        noise: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let s = affine(w, p.get(&format!("layer{i}.affine.weight"))?, p.get(&format!("layer{i}.affine.bias"))?)?;
        let mut y = modulated_conv(x, &s, p.get(&format!("layer{i}.conv.weight"))?, true, LRELU_GAIN, DEFAULT_EPS)?;
        if let (Some(n), true) = (noise, self.cfg.noise_per_layer) {
            let [d, h, wd] = self.cfg.layer_shape(i);
            let ns = n.shape();
            if ns.len() != 5 || ns[1] != 1 || ns[2..] != [d, h, wd] || (ns[0] != 1 && ns[0] != x.shape()[0]) {
                return Err(Error::Shape(format!(
                    "noise map for layer {i} has shape {ns:?}, expected [N|1, 1, {d}, {h}, {wd}]"
                )));
            }
            let strength = p.get(&format!("layer{i}.noise_strength"))?;
            y = y.add(&n.mul(&strength.reshape(&[1, 1, 1, 1, 1])?)?)?;
        }
        let ch = self.cfg.fmap_depth;
        let b = p.get(&format!("layer{i}.conv.bias"))?.reshape(&[1, ch, 1, 1, 1])?;
        Ok(y.add(&b)?.leaky_relu(self.cfg.lrelu_alpha)?)
    }

    pub fn synthesis<T: Scalar>(&self, p: &Bound<T>, ws: &[Tensor<T>], noise: &NoiseMaps<T>) -> Result<Tensor<T>> {
        Ok(self.synthesis_traced(p, ws, noise, false)?.image)
    }

    /// Synthesis from one `[N, latent]` latent per style layer, optionally
    /// with a separate latent for the output convolution appended.
    pub fn synthesis_traced<T: Scalar>(
        &self,
        p: &Bound<T>,
        ws: &[Tensor<T>],
        noise: &NoiseMaps<T>,
        keep: bool,
    ) -> Result<SynthesisTrace<T>> {
        let layers = self.num_ws();
        if ws.len() != layers && ws.len() != layers + 1 {
            return Err(Error::InvalidArgument(format!(
                "synthesis needs {layers} (or {}) latents, got {}",
                layers + 1,
                ws.len()
            )));
        }
        if noise.maps.len() != layers {
            return Err(Error::InvalidArgument(format!("expected {layers} noise maps, got {}", noise.maps.len())));
        }
        let n = ws[0].shape()[0];
        for w in ws {
            if w.shape() != [n, self.cfg.latent_size] {
                return Err(Error::Shape(format!("latent {:?}, expected [{n}, {}]", w.shape(), self.cfg.latent_size)));
            }
        }
        let konst = p.get("const")?;
        let mut shape = konst.shape().to_vec();
        shape[0] = n;
        let mut x = konst.broadcast_to(&shape)?;
        let mut activations = Vec::new();
        for i in 0..layers {
            if i > 0 && i % 2 == 1 {
                x = upsample_nearest3d(&x, 2)?;
            }
            x = self.style_layer(p, i, &x, &ws[i], noise.maps[i].as_ref())?;
            if keep {
                activations.push(x.clone());
            }
        }
        let w_out = &ws[ws.len() - 1];
        let s = affine(w_out, p.get("out.affine.weight")?, p.get("out.affine.bias")?)?;
        let y = modulated_conv(&x, &s, p.get("out.conv.weight")?, false, 1.0, DEFAULT_EPS)?;
        let image = y.add(&p.get("out.conv.bias")?.reshape(&[1, 1, 1, 1, 1])?)?;
        Ok(SynthesisTrace { image, activations })
    }

    /// Per-layer latents switching from `w_a` to `w_b` after `cutoff` layers.
    /// The output convolution follows the last style layer.
    pub fn mix<T: Scalar>(&self, w_a: &Tensor<T>, w_b: &Tensor<T>, cutoff: usize) -> Result<Vec<Tensor<T>>> {
        let layers = self.num_ws();
        if cutoff > layers {
            return Err(Error::InvalidArgument(format!("mixing cutoff {cutoff} outside [0, {layers}]")));
        }
        Ok((0..layers).map(|i| if i < cutoff { w_a.clone() } else { w_b.clone() }).collect())
    }

    /// Mapping followed by synthesis, with optional style mixing: the first
    /// `cutoff` style layers take `z_a`'s latent, the rest take `z_b`'s.
    pub fn forward<T: Scalar>(
        &self,
        p: &Bound<T>,
        z_a: &Tensor<T>,
        mixing: Option<(&Tensor<T>, usize)>,
        noise: &NoiseMaps<T>,
    ) -> Result<Tensor<T>> {
        let w_a = self.mapping(p, z_a)?;
        let ws = match mixing {
            None => vec![w_a; self.num_ws()],
            Some((z_b, cutoff)) => {
                let w_b = self.mapping(p, z_b)?;
                self.mix(&w_a, &w_b, cutoff)?
            }
        };
        self.synthesis(p, &ws, noise)
    }
}
