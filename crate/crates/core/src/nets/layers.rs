//! Building blocks shared by the generator and the discriminator.

use std::f64::consts::SQRT_2;

use voxstyle_tensor::ops::{conv3d, dense, equalized_scale};
use voxstyle_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-8;
pub const LRELU_GAIN: f64 = SQRT_2;

/// `z / sqrt(mean(z²) + eps)` over the feature axis of `[N, F]`.
pub fn pixel_norm<T: Scalar>(z: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if z.shape().len() != 2 {
        return Err(Error::Shape(format!("pixel_norm expects [N, F], got {:?}", z.shape())));
    }
    let inv = z.square()?.mean_axes(&[1], true)?.add_scalar(eps)?.powf(-0.5)?;
    Ok(z.mul(&inv)?)
}

fn kernel_fan_in(weight: &Tensor<impl Scalar>) -> Result<usize> {
    match weight.shape() {
        [_, c, kd, kh, kw] => Ok(c * kd * kh * kw),
        s => Err(Error::Shape(format!("conv weight must be [K, C, kd, kh, kw], got {s:?}"))),
    }
}

/// Equalized-learning-rate convolution with "same" zero padding.
pub fn eq_conv<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>, gain: f64) -> Result<Tensor<T>> {
    let scale = equalized_scale(kernel_fan_in(weight)?, gain, 1.0);
    let pad = weight.shape()[2] / 2;
    Ok(conv3d(x, &weight.scale(scale)?, bias, 1, pad)?)
}

/// Scales input channel `j` of `weight [K, C, k, k, k]` by `s[j]` and, with
/// `demod`, renormalizes every output channel to unit L2 norm.
pub fn modulate_demodulate<T: Scalar>(weight: &Tensor<T>, s: &Tensor<T>, demod: bool, eps: f64) -> Result<Tensor<T>> {
    let c = kernel_fan_in(weight)? / weight.shape()[2..].iter().product::<usize>();
    if s.shape() != [c] {
        return Err(Error::Shape(format!("style has shape {:?}, weight expects [{c}]", s.shape())));
    }
    let w = weight.mul(&s.reshape(&[1, c, 1, 1, 1])?)?;
    if !demod {
        return Ok(w);
    }
    let norm = w.square()?.sum_axes(&[1, 2, 3, 4], true)?.add_scalar(eps)?.powf(-0.5)?;
    Ok(w.mul(&norm)?)
}

/// Modulated convolution for a batch of styles `s [N, C]`.
///
/// Equivalent to convolving sample `n` with
/// `modulate_demodulate(weight · wscale, s[n])`, but the style is applied to
/// the activations so one shared kernel serves the whole batch.
pub fn modulated_conv<T: Scalar>(
    x: &Tensor<T>,
    s: &Tensor<T>,
    weight: &Tensor<T>,
    demod: bool,
    gain: f64,
    eps: f64,
) -> Result<Tensor<T>> {
    let (n, c) = match (x.shape(), s.shape()) {
        ([n, c, ..], [sn, sc]) if n == sn && c == sc => (*n, *c),
        _ => {
            return Err(Error::Shape(format!(
                "modulated_conv: input {:?} does not match style {:?}",
                x.shape(),
                s.shape()
            )))
        }
    };
    let k = weight.shape()[0];
    let w = weight.scale(equalized_scale(kernel_fan_in(weight)?, 1.0, 1.0))?;
    let xs = x.mul(&s.reshape(&[n, c, 1, 1, 1])?)?;
    let y = conv3d(&xs, &w, None, 1, weight.shape()[2] / 2)?;
    if !demod {
        return Ok(if gain == 1.0 { y } else { y.scale(gain)? });
    }
    let wsq = w.square()?.sum_axes(&[2, 3, 4], false)?;
    let d = s.square()?.matmul(&wsq.transpose()?)?.add_scalar(eps)?.powf(-0.5)?.scale(gain)?;
    Ok(y.mul(&d.reshape(&[n, k, 1, 1, 1])?)?)
}

/// Affine style map `A(w)`: unit gain, bias initialized to one.
pub fn affine<T: Scalar>(w: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(dense(w, weight, Some(bias), 1.0, 1.0)?)
}
