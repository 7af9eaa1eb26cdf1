//! Path-length regularization of the generator.

use rand::Rng;
use voxstyle_tensor::{Array, Scalar, Tensor};

use crate::error::{Error, Result};
use crate::nets::{Bound, Generator, NoiseMaps};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLengthState {
    /// Running average `a` of the observed path lengths.
    pub mean: f64,
    pub decay: f64,
    pub weight: f64,
    pub interval: u64,
}

impl Default for PathLengthState {
    fn default() -> Self {
        Self {
            mean: 0.0,
            decay: 0.01,
            weight: 2.0,
            interval: 16,
        }
    }
}

/// Scale for a lazily applied regularizer at `step`: `Some(interval)` on
/// steps divisible by `interval`, `None` otherwise.
pub fn lazy_regularize(step: u64, interval: u64) -> Result<Option<f64>> {
    if interval == 0 {
        return Err(Error::InvalidArgument("regularization interval must be >= 1".into()));
    }
    Ok((step % interval == 0).then_some(interval as f64))
}

/// `weight · mean((p − a)²)` and the state after folding `p` into `a`.
///
/// The running average moves by `decay · mean(p − a)`, so lengths equal to
/// `a` leave it bit-for-bit unchanged.
pub fn penalty_from_lengths<T: Scalar>(lengths: &Tensor<T>, state: &PathLengthState) -> Result<(Tensor<T>, PathLengthState)> {
    if lengths.numel() == 0 {
        return Err(Error::InvalidArgument("empty path-length batch".into()));
    }
    if !lengths.value().is_finite() {
        return Err(Error::NonFinite("path lengths".into()));
    }
    let penalty = lengths.add_scalar(-state.mean)?.square()?.mean()?.scale(state.weight)?;
    let drift = lengths.data().iter().map(|p| p.f64() - state.mean).sum::<f64>() / lengths.numel() as f64;
    let next = PathLengthState {
        mean: state.mean + state.decay * drift,
        ..*state
    };
    Ok((penalty, next))
}

/// `‖∇_w ⟨image, y⟩‖₂` per row of the tracked latent batch `w [N, F]`.
/// The gradient graph is kept so the lengths can be differentiated again.
pub fn path_lengths<T: Scalar>(w: &Tensor<T>, image: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = w.tape().ok_or_else(|| Error::InvalidArgument("path length needs a tracked latent".into()))?.clone();
    let inner = image.mul(y)?.sum()?;
    let g = tape.grad(&inner, &[w], true)?.remove(0);
    Ok(g.square()?.sum_axes(&[1], false)?.sqrt()?)
}

/// Standard normal projection directions scaled by `1/sqrt(voxels per sample)`.
pub fn projection_noise<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Array<T> {
    let per_sample: usize = shape[1..].iter().product();
    Array::randn(shape, 1.0 / (per_sample as f64).sqrt(), rng)
}

/// Path-length penalty of the generator at latents `w_batch` (which must be
/// tracked on the tape that also holds the generator parameters to train).
pub fn path_length_penalty<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator,
    params: &Bound<T>,
    w_batch: &Tensor<T>,
    noise: &NoiseMaps<T>,
    state: &PathLengthState,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>, PathLengthState)> {
    let ws = vec![w_batch.clone(); gen.num_ws()];
    let image = gen.synthesis(params, &ws, noise)?;
    let y = Tensor::constant(projection_noise(image.shape(), rng));
    let lengths = path_lengths(w_batch, &image, &y)?;
    let (penalty, next) = penalty_from_lengths(&lengths, state)?;
    Ok((penalty, lengths, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use voxstyle_tensor::Tape;

    #[test]
    fn lazy_schedule() {
        let applied: Vec<u64> = (0..40).filter(|&s| lazy_regularize(s, 16).unwrap().is_some()).collect();
        assert_eq!(applied, vec![0, 16, 32]);
        assert_eq!((0..160).filter(|&s| lazy_regularize(s, 16).unwrap().is_some()).count(), 10);
        assert!((0..5).all(|s| lazy_regularize(s, 1).unwrap() == Some(1.0)));
        assert_eq!(lazy_regularize(32, 16).unwrap(), Some(16.0));
        assert!(lazy_regularize(0, 0).is_err());
    }

    #[test]
    fn fixed_point_is_exact() {
        let state = PathLengthState {
            mean: 0.1,
            ..Default::default()
        };
        let p = Tensor::constant(Array::<f64>::full(&[3], 0.1));
        let (penalty, next) = penalty_from_lengths(&p, &state).unwrap();
        assert_eq!(penalty.item(), 0.0);
        assert_eq!(next, state);
    }

    #[test]
    fn linear_map_lengths_are_transpose_norms() {
        // g(w) = M w  ⇒  ∇_w ⟨g, y⟩ = Mᵀ y
        let tape = Tape::<f64>::new();
        let m = Array::from_f64(&[3, 2], &[1.0, 2.0, 0.0, -1.0, 3.0, 0.5]).unwrap();
        let w = tape.leaf(Array::from_f64(&[1, 2], &[0.3, -0.7]).unwrap());
        let image = w.matmul(&Tensor::constant(m).transpose().unwrap()).unwrap();
        let y = Tensor::constant(Array::from_f64(&[1, 3], &[1.0, -2.0, 0.5]).unwrap());
        let p = path_lengths(&w, &image, &y).unwrap();
        // Mᵀy = (1·1 + 0·(−2) + 3·0.5, 2·1 + (−1)(−2) + 0.5·0.5) = (2.5, 4.25)
        assert!((p.item() - (2.5f64 * 2.5 + 4.25 * 4.25).sqrt()).abs() < 1e-12);
    }
}
