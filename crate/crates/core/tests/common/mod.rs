//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxstyle::io::Volume;
use voxstyle::nets::{Bound, Discriminator, Generator, NoiseMaps, NoiseMode, ParamSet};
use voxstyle::training::{path_length_penalty, PathLengthState};
use voxstyle::ModelConfig;
use voxstyle_tensor::gradcheck::{max_relative_error, GradCheckOptions};
use voxstyle_tensor::{Array, Tape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(dims: [usize; 3], r: &mut ChaCha8Rng) -> Volume {
    let n = dims.iter().product();
    Volume::new(dims, (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- conv3d

/// Direct seven-loop convolution, accumulated in the order (c, kd, kh, kw).
#[allow(clippy::too_many_arguments)]
pub fn nested_loop_conv(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    [n, c, d, h, wd]: [usize; 5],
    [k, kd, kh, kw]: [usize; 4],
    stride: usize,
    pad: usize,
) -> (Vec<usize>, Vec<f64>) {
    let od = (d + 2 * pad - kd) / stride + 1;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let inside = |v: isize, e: usize| v >= 0 && v < e as isize;
    let mut out = Vec::with_capacity(n * k * od * oh * ow);
    for ni in 0..n {
        for ki in 0..k {
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut acc = 0.0f64;
                        for ci in 0..c {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let zz = (z * stride + a) as isize - pad as isize;
                                        let yy = (y * stride + bb) as isize - pad as isize;
                                        let xx = (xo * stride + e) as isize - pad as isize;
                                        if !(inside(zz, d) && inside(yy, h) && inside(xx, wd)) {
                                            continue;
                                        }
                                        let xi = (((ni * c + ci) * d + zz as usize) * h + yy as usize) * wd + xx as usize;
                                        let wi = (((ki * c + ci) * kd + a) * kh + bb) * kw + e;
                                        acc += x[xi] * w[wi];
                                    }
                                }
                            }
                        }
                        out.push(acc + b[ki]);
                    }
                }
            }
        }
    }
    (vec![n, k, od, oh, ow], out)
}

/// Random conv case with extents ≤ 6: (input shape, weight shape, stride, pad).
pub fn random_conv_case(r: &mut ChaCha8Rng) -> ([usize; 5], [usize; 5], usize, usize) {
    loop {
        let dims = [r.gen_range(1..=6), r.gen_range(1..=6), r.gen_range(1..=6)];
        let ker = [1, 3, 5].map(|_| [1, 3, 5][r.gen_range(0..3)]);
        let stride = r.gen_range(1..=2);
        let pad = r.gen_range(0..=2);
        if (0..3).any(|i| dims[i] + 2 * pad < ker[i]) {
            continue;
        }
        let (n, c, k) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
        return ([n, c, dims[0], dims[1], dims[2]], [k, c, ker[0], ker[1], ker[2]], stride, pad);
    }
}

// ---------------------------------------------------------------- metrics

/// ‖mean(X) − mean(Y)‖² computed from the batch means directly.
pub fn mean_difference_sq(x: &[Volume], y: &[Volume]) -> f64 {
    let mean = |s: &[Volume]| -> Vec<f64> {
        let mut m = vec![0.0; s[0].len()];
        for v in s {
            for (a, &b) in m.iter_mut().zip(v.data()) {
                *a += b as f64;
            }
        }
        m.iter().map(|a| a / s.len() as f64).collect()
    };
    mean(x).iter().zip(mean(y)).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Denman–Beavers iteration for the principal square root of an SPD matrix.
pub fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().expect("invertible iterate");
        let zi = z.clone().try_inverse().expect("invertible iterate");
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let delta = (&ny - &y).norm();
        y = ny;
        z = nz;
        if delta < 1e-15 * y.norm() {
            break;
        }
    }
    y
}

/// ‖μ1 − μ2‖² + tr(S1 + S2 − 2·(S1 S2)^½), with the root taken of the
/// similar SPD matrix S1^½ S2 S1^½.
pub fn frechet_oracle(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let r = sqrtm_denman_beavers(s1);
    let cross = sqrtm_denman_beavers(&(&r * s2 * &r));
    (mu1 - mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross.trace()
}

/// Well-conditioned random SPD matrix `A·Aᵀ + 0.1·I`.
pub fn random_spd(n: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn random_vector(n: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-2.0..2.0))
}

// ---------------------------------------------------------------- networks

/// Parameters in f64 with every entry nudged so no tensor is all-constant.
pub fn perturbed(set: &ParamSet<f32>, seed: u64) -> ParamSet<f64> {
    let mut r = rng(seed);
    let base = set.cast::<f64>();
    let values = base
        .values()
        .iter()
        .map(|a| {
            let n = Array::<f64>::randn(a.shape(), 0.1, &mut r);
            a.zip_broadcast(&n, "perturb", |x, y| x + y).unwrap()
        })
        .collect();
    base.with_values(values).unwrap()
}

fn arrays(p: &ParamSet<f64>) -> Vec<Array<f64>> {
    p.values().iter().map(|a| (**a).clone()).collect()
}

fn opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        max_coords: Some(10),
        seed,
        ..Default::default()
    }
}

/// Max relative finite-difference error of the tiny generator with style
/// mixing and per-sample noise, w.r.t. parameters and both latents.
pub fn generator_grad_error(seed: u64) -> f64 {
    let cfg = ModelConfig::tiny();
    let gen = Generator::new(&cfg).unwrap();
    let params = perturbed(&gen.init(seed), seed + 100);
    let names = params.names().to_vec();
    let noise = NoiseMaps::<f64>::new(&cfg, 2, NoiseMode::Random { seed, index: 0 });
    let mut r = rng(seed);
    let mut inputs = arrays(&params);
    inputs.push(Array::randn(&[2, cfg.latent_size], 1.0, &mut r));
    inputs.push(Array::randn(&[2, cfg.latent_size], 1.0, &mut r));
    let n = names.len();
    max_relative_error(
        |t| {
            let p = Bound::from_tensors(&names, t[..n].to_vec()).unwrap();
            Ok(gen.forward(&p, &t[n], Some((&t[n + 1], 2)), &noise).unwrap())
        },
        &inputs,
        opts(seed),
    )
    .unwrap()
}

/// Same check for the tiny discriminator on a batch of four volumes.
pub fn discriminator_grad_error(seed: u64) -> f64 {
    let cfg = ModelConfig::tiny();
    let disc = Discriminator::new(&cfg).unwrap();
    let [x, y, z] = cfg.output_shape();
    let params = perturbed(&disc.init(seed), seed + 200);
    let names = params.names().to_vec();
    let mut r = rng(seed);
    let mut inputs = arrays(&params);
    inputs.push(Array::randn(&[4, 1, x, y, z], 1.0, &mut r));
    let n = names.len();
    max_relative_error(
        |t| {
            let p = Bound::from_tensors(&names, t[..n].to_vec()).unwrap();
            Ok(disc.forward(&p, &t[n]).unwrap())
        },
        &inputs,
        opts(seed),
    )
    .unwrap()
}

/// Gradient of the path-length penalty w.r.t. every generator parameter.
pub fn path_length_grad_error(seed: u64) -> f64 {
    let cfg = ModelConfig::tiny();
    let gen = Generator::new(&cfg).unwrap();
    let params = perturbed(&gen.init(seed), seed + 300);
    let names = params.names().to_vec();
    let noise = NoiseMaps::<f64>::new(&cfg, 2, NoiseMode::Random { seed, index: 1 });
    let z = Tensor::constant(Array::randn(&[2, cfg.latent_size], 1.0, &mut rng(seed)));
    let state = PathLengthState {
        mean: 0.3,
        ..Default::default()
    };
    max_relative_error(
        |t| {
            let p = Bound::from_tensors(&names, t.to_vec()).unwrap();
            let w = gen.mapping(&p, &z).unwrap();
            // value-only evaluations have no tape, but the latent must still
            // be differentiable for the inner gradient
            let local = Tape::new();
            let w = if w.is_tracked() { w } else { local.leaf(w.value().clone()) };
            let mut y_rng = rng(seed + 7);
            Ok(path_length_penalty(&gen, &p, &w, &noise, &state, &mut y_rng).unwrap().0)
        },
        &arrays(&params),
        opts(seed),
    )
    .unwrap()
}
