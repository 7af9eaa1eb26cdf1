//! Central finite-difference validation of analytic gradients (f64 only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::Array;
use crate::error::Result;
use crate::ops::conv3d;
use crate::tape::{Tape, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Options for [`max_relative_error`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check at most this many coordinates per input (all when `None`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_coords: None,
            seed: 0,
        }
    }
}

fn projection_for(shape: &[usize], seed: u64) -> Array<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Array::randn(shape, 1.0, &mut rng)
}

fn reduce(out: &Tensor<f64>, proj: &Array<f64>) -> Result<Tensor<f64>> {
    if out.numel() == 1 {
        return out.sum();
    }
    out.mul(&Tensor::constant(proj.clone()))?.sum()
}

/// Largest `|analytic − numeric| / max(1, |numeric|)` over the checked input
/// coordinates of `f`. Non-scalar outputs are contracted with a fixed random
/// tensor first.
pub fn max_relative_error<F>(f: F, inputs: &[Array<f64>], opts: GradCheckOptions) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = f(&leaves)?;
    let proj = projection_for(out.shape(), opts.seed);
    let loss = reduce(&out, &proj)?;
    let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
    let grads = tape.grad(&loss, &refs, false)?;

    let eval = |vals: &[Array<f64>]| -> Result<f64> {
        let consts: Vec<Tensor<f64>> = vals.iter().map(|a| Tensor::constant(a.clone())).collect();
        Ok(reduce(&f(&consts)?, &proj)?.item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    let mut work: Vec<Array<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < input.len() => sample(&mut rng, input.len(), m).into_vec(),
            _ => (0..input.len()).collect(),
        };
        for j in coords {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + opts.step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - opts.step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic = grads[i].data()[j];
            worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Gradient check of `conv3d` (input, weight and bias) on random data.
pub fn conv3d_grad_check(
    input_shape: [usize; 5],
    weight_shape: [usize; 5],
    stride: usize,
    pad: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array::randn(&input_shape, 1.0, &mut rng);
    let w = Array::randn(&weight_shape, 1.0, &mut rng);
    let b = Array::randn(&[weight_shape[0]], 1.0, &mut rng);
    max_relative_error(
        |t| conv3d(&t[0], &t[1], Some(&t[2]), stride, pad),
        &[x, w, b],
        GradCheckOptions {
            seed,
            ..Default::default()
        },
    )
}
