use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tensor};

struct Matmul;
impl<T: Scalar> Backward<T> for Matmul {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let ga = if needs[0] { Some(g.matmul(&x[1].transpose()?)?) } else { None };
        let gb = if needs[1] { Some(x[0].transpose()?.matmul(g)?) } else { None };
        Ok(vec![ga, gb])
    }
}

fn matmul_kernel<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aik = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

impl<T: Scalar> Tensor<T> {
    /// `[M, K] x [K, N] -> [M, N]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (&[m, k], &[k2, n]) = (self.shape(), other.shape()) else {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let data = matmul_kernel(self.data(), other.data(), m, k, n);
        Tensor::from_op(&[self, other], Array::from_vec(&[m, n], data)?, Matmul)
    }
}

/// Runtime weight multiplier of an equalized-learning-rate layer.
pub fn equalized_scale(fan_in: usize, gain: f64, lr_mul: f64) -> f64 {
    lr_mul * gain / (fan_in as f64).sqrt()
}

/// Equalized-learning-rate dense layer.
///
/// `out = input · (weightᵀ · lr_mul · gain / sqrt(F_in)) + bias · lr_mul`,
/// with `input: [N, F_in]`, `weight: [F_out, F_in]`, `bias: [F_out]`.
/// The default gain for layers followed by leaky ReLU is `sqrt(2)`.
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    lr_mul: f64,
    gain: f64,
) -> Result<Tensor<T>> {
    let (&[_, f_in], &[f_out, w_in]) = (input.shape(), weight.shape()) else {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    };
    if f_in != w_in {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    let scale = equalized_scale(f_in, gain, lr_mul);
    let y = input.matmul(&weight.transpose()?.scale(scale)?)?;
    match bias {
        Some(b) => {
            if b.shape() != [f_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "dense bias",
                    lhs: b.shape().to_vec(),
                    rhs: vec![f_out],
                });
            }
            y.add(&b.scale(lr_mul)?)
        }
        None => Ok(y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::<f64>::constant(Array::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap());
        let b = Tensor::<f64>::constant(Array::from_f64(&[2, 1], &[5., 6.]).unwrap());
        assert_eq!(a.matmul(&b).unwrap().data(), &[17., 39.]);
        assert!(a.matmul(&a.reshape(&[4, 1]).unwrap()).is_err());
    }

    #[test]
    fn dense_all_ones_scaling() {
        let x = Tensor::<f64>::constant(Array::ones(&[1, 4]));
        let w = Tensor::<f64>::constant(Array::ones(&[3, 4]));
        let b = Tensor::<f64>::constant(Array::zeros(&[3]));
        let y = dense(&x, &w, Some(&b), 1.0, 2f64.sqrt()).unwrap();
        for v in y.data() {
            assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_identity_weight() {
        let n = 5;
        let scale = equalized_scale(n, 2f64.sqrt(), 1.0);
        let mut w = Array::<f64>::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0 / scale;
        }
        let x = Array::from_f64(&[2, n], &[1., -2., 3., 0.5, 7., 0., 1., 2., 3., 4.]).unwrap();
        let y = dense(
            &Tensor::constant(x.clone()),
            &Tensor::constant(w),
            Some(&Tensor::constant(Array::zeros(&[n]))),
            1.0,
            2f64.sqrt(),
        )
        .unwrap();
        assert!(y.value().max_abs_diff(&x) < 1e-12);
    }
}
