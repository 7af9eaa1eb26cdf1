//! Latent projection: find the latent w (and noise maps) whose generated
//! volume best matches a target under a two-scale MSE, plus style mixing of
//! latents.

use std::f64::consts::PI;
use std::fmt::Write as _;

use voxstyle_tensor::ops::avgpool3d;
use voxstyle_tensor::{Array, Tape, Tensor};

use crate::error::{Error, Result};
use crate::io::Volume;
use crate::nets::{Generator, NoiseMaps, NoiseMode, ParamSet};
use crate::rng::{stream, Purpose};
use crate::training::{Adam, AdamConfig};

pub const TRACE_HEADER: &str = "step,mse_full,mse_down,total";

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOptions {
    pub steps: usize,
    pub lr: f64,
    /// Fraction of the run over which the learning rate ramps up / down.
    pub rampup: f64,
    pub rampdown: f64,
    /// Weight of the downsampled term.
    pub lambda: f64,
    /// Requested downsampling factor of the second term.
    pub down_factor: usize,
    /// Optimize one latent per style layer instead of a shared one.
    pub extended: bool,
    pub optimize_noise: bool,
    /// Weight of the noise autocorrelation penalty; 0 disables it.
    pub noise_reg: f64,
    pub w_avg_samples: usize,
    pub seed: u64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 0.1,
            rampup: 0.05,
            rampdown: 0.25,
            lambda: 1.0,
            down_factor: 8,
            extended: false,
            optimize_noise: true,
            noise_reg: 0.0,
            w_avg_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub mse_full: f64,
    pub mse_down: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// One `[1, latent]` latent, or one per style layer in extended mode.
    pub w: Vec<Array<f32>>,
    pub noise: Vec<Array<f32>>,
    pub loss_trace: Vec<TraceRow>,
    pub best_step: usize,
    pub final_volume: Volume,
}

impl ProjectionResult {
    pub fn best(&self) -> &TraceRow {
        &self.loss_trace[self.best_step]
    }
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for r in trace {
        writeln!(s, "{},{},{},{}", r.step, r.mse_full, r.mse_down, r.total).unwrap();
    }
    s
}

/// Largest power of two ≤ `requested` dividing every extent.
pub fn effective_down_factor(dims: [usize; 3], requested: usize) -> usize {
    let mut f = 1;
    while f * 2 <= requested && dims.iter().all(|&d| d % (f * 2) == 0) {
        f *= 2;
    }
    f
}

/// `(total, mse_full, mse_down)` between two volumes in f64, with the
/// downsampled term at factor 8 or the largest valid power of two below it.
pub fn projection_loss(target: &Volume, out: &Volume, lambda: f64) -> Result<(f64, f64, f64)> {
    if target.dims() != out.dims() {
        return Err(Error::Shape(format!("projection target {:?} vs output {:?}", target.dims(), out.dims())));
    }
    let f = effective_down_factor(target.dims(), 8);
    let diff: Vec<f64> = target.data().iter().zip(out.data()).map(|(&a, &b)| a as f64 - b as f64).collect();
    let [dx, dy, dz] = target.dims();
    let d = Tensor::constant(Array::from_vec(&[1, 1, dx, dy, dz], diff)?);
    let full = d.square()?.mean()?.item();
    let down = avgpool3d(&d, f)?.square()?.mean()?.item();
    Ok((full + lambda * down, full, down))
}

fn loss_tensors(out: &Tensor<f32>, target: &Tensor<f32>, factor: usize, lambda: f64) -> Result<[Tensor<f32>; 3]> {
    let d = out.sub(target)?;
    let full = d.square()?.mean()?;
    let down = avgpool3d(&d, factor)?.square()?.mean()?;
    let total = full.add(&down.scale(lambda)?)?;
    Ok([total, full, down])
}

/// Mean mapping output over `samples` latents from the projection stream.
pub fn w_average(gen: &Generator, params: &ParamSet<f32>, samples: usize, seed: u64) -> Result<Array<f32>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("w_avg needs at least one sample".into()));
    }
    let z_dim = gen.config().latent_size;
    let p = params.bind(None);
    let mut rng = stream(seed, Purpose::Projection, 0);
    let mut acc = vec![0.0f64; z_dim];
    let mut left = samples;
    while left > 0 {
        let n = left.min(1000);
        let z = Array::<f32>::randn(&[n, z_dim], 1.0, &mut rng);
        let w = gen.mapping(&p, &Tensor::constant(z))?;
        for row in w.data().chunks_exact(z_dim) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v as f64;
            }
        }
        left -= n;
    }
    let mean: Vec<f64> = acc.iter().map(|v| v / samples as f64).collect();
    Ok(Array::from_f64(&[1, z_dim], &mean)?)
}

/// Learning-rate multiplier at fraction `t` of the run: cosine ramp-down over
/// the last `rampdown`, linear ramp-up over the first `rampup`.
pub fn lr_multiplier(t: f64, rampup: f64, rampdown: f64) -> f64 {
    let down = if rampdown > 0.0 { ((1.0 - t) / rampdown).min(1.0) } else { 1.0 };
    let up = if rampup > 0.0 { (t / rampup).min(1.0) } else { 1.0 };
    (0.5 - 0.5 * (PI * down).cos()) * up
}

fn roll(x: &Tensor<f32>, axis: usize) -> Result<Tensor<f32>> {
    let n = x.shape()[axis];
    Ok(Tensor::concat(&[&x.narrow(axis, 1, n - 1)?, &x.narrow(axis, 0, 1)?], axis)?)
}

/// Sum over scales and axes of the squared lag-1 autocorrelation of each map.
fn noise_penalty(maps: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let mut total = Tensor::scalar(0.0);
    for m in maps {
        let mut x = m.clone();
        loop {
            for axis in 2..5 {
                if x.shape()[axis] > 1 {
                    total = total.add(&x.mul(&roll(&x, axis)?)?.mean()?.square()?)?;
                }
            }
            if x.shape()[2..].iter().any(|&e| e < 8 || e % 2 != 0) {
                break;
            }
            x = avgpool3d(&x, 2)?;
        }
    }
    Ok(total)
}

/// Gradient-descent projection of `target` into the generator's latent space.
/// Returns the iterate with the lowest total loss.
pub fn project(gen: &Generator, params: &ParamSet<f32>, target: &Volume, opts: &ProjectionOptions) -> Result<ProjectionResult> {
    let cfg = gen.config();
    if target.dims() != cfg.output_shape() {
        return Err(Error::Shape(format!(
            "target is {:?}, generator produces {:?}",
            target.dims(),
            cfg.output_shape()
        )));
    }
    if opts.steps < 1 {
        return Err(Error::InvalidArgument("projection steps must be ≥ 1".into()));
    }
    let factor = effective_down_factor(target.dims(), opts.down_factor);
    if factor != opts.down_factor {
        log::info!("downsampling factor reduced from {} to {factor} for {:?}", opts.down_factor, target.dims());
    }
    let layers = gen.num_ws();
    let w_avg = w_average(gen, params, opts.w_avg_samples, opts.seed)?;
    let mut vars = ParamSet::<f32>::default();
    for i in 0..if opts.extended { layers } else { 1 } {
        vars.push(&format!("w{i}"), w_avg.clone())?;
    }
    let n_w = vars.len();
    let use_noise = opts.optimize_noise && cfg.noise_per_layer;
    if use_noise {
        let mut rng = stream(opts.seed, Purpose::Projection, 1);
        for i in 0..layers {
            let [d, h, w] = cfg.layer_shape(i);
            vars.push(&format!("noise{i}"), Array::randn(&[1, 1, d, h, w], 1.0, &mut rng))?;
        }
    }
    let mut adam = Adam::new(
        AdamConfig {
            lr: opts.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        &vars,
    );
    let p = params.bind(None);
    let target_t = Tensor::constant(target.to_array());
    let mut trace = Vec::with_capacity(opts.steps);
    let mut best: Option<(f64, usize, ParamSet<f32>)> = None;
    for step in 0..opts.steps {
        let tape = Tape::new();
        let bound = vars.bind(Some(&tape));
        let t = bound.tensors();
        let ws: Vec<Tensor<f32>> = (0..layers).map(|i| t[if opts.extended { i } else { 0 }].clone()).collect();
        let noise = if use_noise {
            NoiseMaps {
                maps: t[n_w..].iter().cloned().map(Some).collect(),
            }
        } else {
            NoiseMaps::none(cfg)
        };
        let out = gen.synthesis(&p, &ws, &noise)?;
        let [total, full, down] = loss_tensors(&out, &target_t, factor, opts.lambda)?;
        let row = TraceRow {
            step,
            mse_full: full.item(),
            mse_down: down.item(),
            total: total.item(),
        };
        if !row.total.is_finite() {
            log::error!("projection diverged at step {step}:\n{}", trace_csv(&trace));
            return Err(Error::NonFinite(format!("projection loss at step {step}")));
        }
        trace.push(row);
        if best.as_ref().map_or(true, |b| row.total < b.0) {
            best = Some((row.total, step, vars.clone()));
        }
        let objective = if opts.noise_reg > 0.0 && use_noise {
            total.add(&noise_penalty(&t[n_w..])?.scale(opts.noise_reg)?)?
        } else {
            total
        };
        let grads: Vec<Array<f32>> = tape
            .grad(&objective, &t.iter().collect::<Vec<_>>(), false)?
            .into_iter()
            .map(|g| g.value().clone())
            .collect();
        adam.config.lr = opts.lr * lr_multiplier(step as f64 / opts.steps as f64, opts.rampup, opts.rampdown);
        adam.update(&mut vars, &grads)?;
    }
    let (_, best_step, vars) = best.expect("at least one step");
    let values: Vec<Array<f32>> = vars.values().iter().map(|a| (**a).clone()).collect();
    let (w, noise) = (values[..n_w].to_vec(), values[n_w..].to_vec());
    let final_volume = synthesize(gen, params, &w, &noise)?;
    Ok(ProjectionResult {
        w,
        noise,
        loss_trace: trace,
        best_step,
        final_volume,
    })
}

/// Generates one volume from a shared latent (or one per style layer) and
/// optional per-layer noise maps.
pub fn synthesize(gen: &Generator, params: &ParamSet<f32>, w: &[Array<f32>], noise: &[Array<f32>]) -> Result<Volume> {
    let ws = per_layer(w, gen.num_ws())?;
    let maps = if noise.is_empty() {
        NoiseMaps::none(gen.config())
    } else {
        NoiseMaps::from_arrays(noise.to_vec())
    };
    let out = gen.synthesis(&params.bind(None), &ws, &maps)?;
    Volume::from_array(out.value())
}

fn per_layer(w: &[Array<f32>], layers: usize) -> Result<Vec<Tensor<f32>>> {
    match w.len() {
        1 => Ok(vec![Tensor::constant(w[0].clone()); layers]),
        n if n == layers => Ok(w.iter().cloned().map(Tensor::constant).collect()),
        n => Err(Error::InvalidArgument(format!("{n} latents for {layers} style layers"))),
    }
}

/// Generates from `w_low` in the first `cutoff` style layers and `w_high` in
/// the rest; the output convolution follows the last style layer. Each side
/// is one shared latent or one per style layer.
pub fn mix_styles(
    gen: &Generator,
    params: &ParamSet<f32>,
    w_low: &[Array<f32>],
    w_high: &[Array<f32>],
    cutoff: usize,
    noise: &NoiseMaps<f32>,
) -> Result<Volume> {
    let layers = gen.num_ws();
    if cutoff > layers {
        return Err(Error::InvalidArgument(format!("mixing cutoff {cutoff} outside [0, {layers}]")));
    }
    let (low, high) = (per_layer(w_low, layers)?, per_layer(w_high, layers)?);
    let ws: Vec<Tensor<f32>> = (0..layers).map(|i| if i < cutoff { low[i].clone() } else { high[i].clone() }).collect();
    let out = gen.synthesis(&params.bind(None), &ws, noise)?;
    Volume::from_array(out.value())
}

/// Latent z number `index` of the sampling stream for `seed`.
pub fn sample_z(latent_size: usize, seed: u64, index: u64) -> Array<f32> {
    Array::randn(&[1, latent_size], 1.0, &mut stream(seed, Purpose::Sample, index))
}

/// Mapped latent w of [`sample_z`].
pub fn latent_for_seed(gen: &Generator, params: &ParamSet<f32>, seed: u64, index: u64) -> Result<Array<f32>> {
    let z = sample_z(gen.config().latent_size, seed, index);
    Ok(gen.mapping(&params.bind(None), &Tensor::constant(z))?.value().clone())
}

/// `count` samples from the seeded latent stream with the seed's fixed noise.
/// Sample k does not depend on `count`.
pub fn generate_samples(gen: &Generator, params: &ParamSet<f32>, seed: u64, count: usize) -> Result<Vec<Volume>> {
    let cfg = gen.config();
    let p = params.bind(None);
    let noise = NoiseMaps::new(cfg, 1, NoiseMode::Fixed(seed));
    (0..count as u64)
        .map(|k| {
            let z = Tensor::constant(sample_z(cfg.latent_size, seed, k));
            Volume::from_array(gen.forward(&p, &z, None, &noise)?.value())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn down_factor_rule() {
        assert_eq!(effective_down_factor([80, 96, 112], 8), 8);
        assert_eq!(effective_down_factor([20, 24, 28], 8), 4);
        assert_eq!(effective_down_factor([5, 6, 7], 8), 1);
    }

    #[test]
    fn lr_schedule_shape() {
        assert_eq!(lr_multiplier(0.0, 0.05, 0.25), 0.0);
        assert!((lr_multiplier(0.5, 0.05, 0.25) - 1.0).abs() < 1e-15);
        assert!((lr_multiplier(0.875, 0.05, 0.25) - 0.5).abs() < 1e-12);
        assert!(lr_multiplier(1.0, 0.05, 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let a = Volume::new([16, 16, 16], (0..4096).map(|i| (i as f32 * 0.01).sin()).collect()).unwrap();
        assert_eq!(projection_loss(&a, &a, 1.0).unwrap(), (0.0, 0.0, 0.0));
        let b = Volume::new([16, 16, 16], a.data().iter().map(|v| v + 0.1).collect()).unwrap();
        let (total, full, down) = projection_loss(&a, &b, 1.0).unwrap();
        assert!((full - 0.01).abs() < 1e-8 && (down - 0.01).abs() < 1e-8 && (total - 0.02).abs() < 1e-8);
    }
}
