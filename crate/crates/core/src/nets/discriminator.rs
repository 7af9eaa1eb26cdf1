use std::f64::consts::FRAC_1_SQRT_2;

use voxstyle_tensor::ops::{avgpool3d, dense};
use voxstyle_tensor::{Scalar, Tensor};

use super::layers::{eq_conv, LRELU_GAIN};
use super::params::{Bound, Init, ParamSet, ParamSpec};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

pub(crate) const DISCRIMINATOR_SALT: u64 = 2;
pub const MBSTD_GROUP: usize = 4;
const MBSTD_EPS: f64 = 1e-8;

/// Residual 3D discriminator producing one logit per volume.
#[derive(Debug, Clone)]
pub struct Discriminator {
    cfg: ModelConfig,
}

/// Largest group size `≤ min(limit, n)` that divides `n`.
pub fn mbstd_group_size(n: usize, limit: usize) -> usize {
    (1..=limit.min(n)).rev().find(|g| n % g == 0).unwrap_or(1)
}

/// Appends one channel holding the average standard deviation of the
/// features across each group of samples.
pub fn minibatch_stddev<T: Scalar>(x: &Tensor<T>, group: usize) -> Result<Tensor<T>> {
    let [n, c, d, h, w] = match x.shape() {
        &[n, c, d, h, w] => [n, c, d, h, w],
        s => return Err(Error::Shape(format!("minibatch_stddev expects 5-D input, got {s:?}"))),
    };
    let g = mbstd_group_size(n, group);
    let m = n / g;
    let y = x.reshape(&[g, m, c * d * h * w])?;
    let centered = y.sub(&y.mean_axes(&[0], true)?)?;
    let std = centered.square()?.mean_axes(&[0], false)?.add_scalar(MBSTD_EPS)?.sqrt()?;
    let feat = std.mean_axes(&[1], false)?;
    let tiled = feat.reshape(&[1, m, 1, 1, 1, 1])?.broadcast_to(&[g, m, 1, d, h, w])?.reshape(&[n, 1, d, h, w])?;
    Ok(Tensor::concat(&[x, &tiled], 1)?)
}

impl Discriminator {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let ch = self.cfg.fmap_depth;
        let base: usize = self.cfg.base_shape.iter().product();
        let mut v = vec![
            ParamSpec::new("from_volume.weight", &[ch, 1, 1, 1, 1], Init::Normal(1.0)),
            ParamSpec::new("from_volume.bias", &[ch], Init::Const(0.0)),
        ];
        for i in 0..self.cfg.levels - 1 {
            for conv in ["conv0", "conv1"] {
                v.push(ParamSpec::new(format!("block{i}.{conv}.weight"), &[ch, ch, 3, 3, 3], Init::Normal(1.0)));
                v.push(ParamSpec::new(format!("block{i}.{conv}.bias"), &[ch], Init::Const(0.0)));
            }
            v.push(ParamSpec::new(format!("block{i}.skip.weight"), &[ch, ch, 1, 1, 1], Init::Normal(1.0)));
        }
        v.push(ParamSpec::new("final_conv.weight", &[ch, ch + 1, 3, 3, 3], Init::Normal(1.0)));
        v.push(ParamSpec::new("final_conv.bias", &[ch], Init::Const(0.0)));
        v.push(ParamSpec::new("dense0.weight", &[ch, ch * base], Init::Normal(1.0)));
        v.push(ParamSpec::new("dense0.bias", &[ch], Init::Const(0.0)));
        v.push(ParamSpec::new("dense1.weight", &[1, ch], Init::Normal(1.0)));
        v.push(ParamSpec::new("dense1.bias", &[1], Init::Const(0.0)));
        v
    }

    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        ParamSet::init(&self.specs(), seed, DISCRIMINATOR_SALT)
    }

    /// `[N, 1, D, H, W] → [N, 1]` logits.
    pub fn forward<T: Scalar>(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [d, h, w] = self.cfg.output_shape();
        let n = match x.shape() {
            &[n, 1, xd, xh, xw] if n > 0 && [xd, xh, xw] == [d, h, w] => n,
            s => return Err(Error::Shape(format!("discriminator input {s:?}, expected [N, 1, {d}, {h}, {w}]"))),
        };
        let alpha = self.cfg.lrelu_alpha;
        let mut x = eq_conv(x, p.get("from_volume.weight")?, Some(p.get("from_volume.bias")?), LRELU_GAIN)?.leaky_relu(alpha)?;
        for i in 0..self.cfg.levels - 1 {
            let conv = |t: &Tensor<T>, name: &str| -> Result<Tensor<T>> {
                let w = p.get(&format!("block{i}.{name}.weight"))?;
                let b = p.get(&format!("block{i}.{name}.bias"))?;
                Ok(eq_conv(t, w, Some(b), LRELU_GAIN)?.leaky_relu(alpha)?)
            };
            let t = avgpool3d(&conv(&conv(&x, "conv0")?, "conv1")?, 2)?;
            let skip = avgpool3d(&eq_conv(&x, p.get(&format!("block{i}.skip.weight"))?, None, 1.0)?, 2)?;
            x = t.add(&skip)?.scale(FRAC_1_SQRT_2)?;
        }
        x = minibatch_stddev(&x, MBSTD_GROUP)?;
        x = eq_conv(&x, p.get("final_conv.weight")?, Some(p.get("final_conv.bias")?), LRELU_GAIN)?.leaky_relu(alpha)?;
        let flat = x.reshape(&[n, x.numel() / n])?;
        let hidden = dense(&flat, p.get("dense0.weight")?, Some(p.get("dense0.bias")?), 1.0, LRELU_GAIN)?.leaky_relu(alpha)?;
        Ok(dense(&hidden, p.get("dense1.weight")?, Some(p.get("dense1.bias")?), 1.0, 1.0)?)
    }
}
