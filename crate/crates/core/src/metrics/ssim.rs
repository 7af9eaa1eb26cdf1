use rand::Rng;

use crate::error::{Error, Result};
use crate::io::Volume;
use crate::rng::{stream, Purpose};

pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimOptions {
    pub window: usize,
    pub sigma: f64,
    /// Dynamic range D of the data; C1 = (0.01·D)², C2 = (0.03·D)².
    pub dynamic_range: f64,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            dynamic_range: 2.0,
        }
    }
}

impl SsimOptions {
    fn constants(&self) -> (f64, f64) {
        ((0.01 * self.dynamic_range).powi(2), (0.03 * self.dynamic_range).powi(2))
    }
}

/// Normalized 1-D Gaussian of odd length `min(window, largest odd ≤ extent)`.
fn gaussian(window: usize, extent: usize, sigma: f64) -> Vec<f64> {
    let fit = if extent % 2 == 1 { extent } else { extent - 1 };
    let n = window.min(fit);
    let c = (n / 2) as f64;
    let g: Vec<f64> = (0..n).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid (unpadded) separable filtering of a row-major 3-D buffer.
fn filter(data: &[f64], dims: [usize; 3], taps: &[Vec<f64>; 3]) -> (Vec<f64>, [usize; 3]) {
    let mut cur = data.to_vec();
    let mut d = dims;
    for axis in 0..3 {
        let k = &taps[axis];
        let mut next = d;
        next[axis] = d[axis] + 1 - k.len();
        let inner: usize = d[axis + 1..].iter().product();
        let outer: usize = d[..axis].iter().product();
        let mut out = vec![0.0; outer * next[axis] * inner];
        for o in 0..outer {
            for j in 0..next[axis] {
                let dst = &mut out[(o * next[axis] + j) * inner..][..inner];
                for (t, &w) in k.iter().enumerate() {
                    let src = &cur[(o * d[axis] + j + t) * inner..][..inner];
                    for (a, &b) in dst.iter_mut().zip(src) {
                        *a += w * b;
                    }
                }
            }
        }
        cur = out;
        d = next;
    }
    (cur, d)
}

/// Mean SSIM map and mean contrast-structure map of two equally shaped buffers.
fn ssim_cs(x: &[f64], y: &[f64], dims: [usize; 3], opts: &SsimOptions) -> Result<(f64, f64)> {
    if dims.iter().any(|&e| e < 1) {
        return Err(Error::Metric(format!("volume {dims:?} too small for an SSIM window")));
    }
    let taps = [0, 1, 2].map(|a| gaussian(opts.window, dims[a], opts.sigma));
    let (c1, c2) = opts.constants();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let (mx, _) = filter(x, dims, &taps);
    let (my, _) = filter(y, dims, &taps);
    let (xx, _) = filter(&sq(x, x), dims, &taps);
    let (yy, _) = filter(&sq(y, y), dims, &taps);
    let (xy, _) = filter(&sq(x, y), dims, &taps);
    let n = mx.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = xx[i] - ux * ux;
        let vy = yy[i] - uy * uy;
        let cov = xy[i] - ux * uy;
        let c = (2.0 * cov + c2) / (vx + vy + c2);
        let l = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
        ssim += l * c;
        cs += c;
    }
    Ok((ssim / n, cs / n))
}

fn check_pair(x: &Volume, y: &Volume) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::Shape(format!("SSIM of {:?} and {:?} volumes", x.dims(), y.dims())));
    }
    Ok(())
}

/// Mean structural similarity with a 3-D Gaussian window.
pub fn ssim3d(x: &Volume, y: &Volume, opts: &SsimOptions) -> Result<f64> {
    check_pair(x, y)?;
    Ok(ssim_cs(&x.to_f64(), &y.to_f64(), x.dims(), opts)?.0)
}

/// Number of scales usable on `dims`: the largest S ≤ `max` with
/// (window − 1)·2^(S−1) ≤ min extent.
pub fn msssim_scales(dims: [usize; 3], window: usize, max: usize) -> usize {
    let min = *dims.iter().min().unwrap();
    (1..=max).take_while(|&s| (window - 1) << (s - 1) <= min).last().unwrap_or(0)
}

fn halve(data: &[f64], dims: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
    let h = dims.map(|e| e / 2);
    let mut out = vec![0.0; h[0] * h[1] * h[2]];
    for i in 0..h[0] {
        for j in 0..h[1] {
            for k in 0..h[2] {
                let mut s = 0.0;
                for (a, b, c) in (0..8).map(|q| (q >> 2, (q >> 1) & 1, q & 1)) {
                    s += data[((2 * i + a) * dims[1] + 2 * j + b) * dims[2] + 2 * k + c];
                }
                out[(i * h[1] + j) * h[2] + k] = s / 8.0;
            }
        }
    }
    (out, h)
}

/// Multi-scale SSIM over 2× average-pooled scales. Scales that do not fit are
/// dropped and the remaining weights renormalized; contrast-structure terms
/// are clamped at 0.
pub fn ms_ssim3d(x: &Volume, y: &Volume, weights: &[f64], opts: &SsimOptions) -> Result<f64> {
    check_pair(x, y)?;
    let scales = msssim_scales(x.dims(), opts.window, weights.len());
    if scales == 0 {
        return Err(Error::Metric(format!("volume {:?} too small for MS-SSIM", x.dims())));
    }
    let total: f64 = weights[..scales].iter().sum();
    let (mut a, mut b, mut dims) = (x.to_f64(), y.to_f64(), x.dims());
    let mut out = 1.0;
    for (s, w) in weights[..scales].iter().enumerate() {
        let (ssim, cs) = ssim_cs(&a, &b, dims, opts)?;
        let term = if s + 1 == scales { ssim } else { cs };
        out *= term.max(0.0).powf(w / total);
        if s + 1 < scales {
            let (pa, d) = halve(&a, dims);
            b = halve(&b, dims).0;
            a = pa;
            dims = d;
        }
    }
    Ok(out)
}

/// Mean and population standard deviation of MS-SSIM over `num_pairs`
/// seeded random pairs of distinct batch members.
pub fn diversity_msssim(batch: &[Volume], num_pairs: usize, seed: u64) -> Result<(f64, f64)> {
    if batch.len() < 2 {
        return Err(Error::Metric("diversity needs at least two volumes".into()));
    }
    if num_pairs == 0 {
        return Err(Error::Metric("diversity needs at least one pair".into()));
    }
    let mut rng = stream(seed, Purpose::Metrics, 0);
    let opts = SsimOptions::default();
    let mut scores = Vec::with_capacity(num_pairs);
    for _ in 0..num_pairs {
        let i = rng.gen_range(0..batch.len());
        let mut j = rng.gen_range(0..batch.len() - 1);
        if j >= i {
            j += 1;
        }
        let (i, j) = (i.min(j), i.max(j));
        scores.push(ms_ssim3d(&batch[i], &batch[j], &MSSSIM_WEIGHTS, &opts)?);
    }
    Ok(mean_std(&scores))
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_window_is_truncated_to_fit() {
        assert_eq!(gaussian(11, 28, 1.5).len(), 11);
        assert_eq!(gaussian(11, 10, 1.5).len(), 9);
        assert_eq!(gaussian(11, 7, 1.5).len(), 7);
        assert!((gaussian(11, 30, 1.5).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_rule() {
        assert_eq!(msssim_scales([20, 24, 28], 11, 5), 2);
        assert_eq!(msssim_scales([80, 96, 112], 11, 5), 4);
        assert_eq!(msssim_scales([160, 192, 224], 11, 5), 5);
        assert_eq!(msssim_scales([9, 9, 9], 11, 5), 0);
    }

    #[test]
    fn halving_averages_octants() {
        let data: Vec<f64> = (0..8).map(|v| v as f64).collect();
        assert_eq!(halve(&data, [2, 2, 2]), (vec![3.5], [1, 1, 1]));
    }
}
