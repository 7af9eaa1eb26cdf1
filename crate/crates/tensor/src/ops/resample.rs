use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tensor};

fn spatial(op: &'static str, shape: &[usize]) -> Result<(usize, [usize; 3])> {
    match shape {
        &[n, c, d, h, w] => Ok((n * c, [d, h, w])),
        _ => Err(TensorError::Rank {
            op,
            expected: 5,
            shape: shape.to_vec(),
        }),
    }
}

struct Upsample(usize);
impl<T: Scalar> Backward<T> for Upsample {
    fn name(&self) -> &'static str {
        "upsample_nearest3d"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let f = self.0 as f64;
        Ok(vec![Some(avgpool3d(g, self.0)?.scale(f * f * f)?)])
    }
}

struct AvgPool(usize);
impl<T: Scalar> Backward<T> for AvgPool {
    fn name(&self) -> &'static str {
        "avgpool3d"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let f = self.0 as f64;
        Ok(vec![Some(upsample_nearest3d(g, self.0)?.scale(1.0 / (f * f * f))?)])
    }
}

/// Nearest-neighbour upsampling: every voxel becomes a `factor³` block.
pub fn upsample_nearest3d<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor < 1 {
        return Err(TensorError::InvalidArgument {
            op: "upsample_nearest3d",
            msg: "factor must be >= 1".into(),
        });
    }
    let (planes, [d, h, w]) = spatial("upsample_nearest3d", input.shape())?;
    let [od, oh, ow] = [d * factor, h * factor, w * factor];
    let src = input.data();
    let mut out = vec![T::zero(); planes * od * oh * ow];
    for p in 0..planes {
        let s = &src[p * d * h * w..(p + 1) * d * h * w];
        let o = &mut out[p * od * oh * ow..(p + 1) * od * oh * ow];
        for z in 0..od {
            for y in 0..oh {
                let srow = &s[((z / factor) * h + y / factor) * w..][..w];
                let orow = &mut o[(z * oh + y) * ow..][..ow];
                for (x, v) in orow.iter_mut().enumerate() {
                    *v = srow[x / factor];
                }
            }
        }
    }
    let mut shape = input.shape().to_vec();
    shape[2..].copy_from_slice(&[od, oh, ow]);
    Tensor::from_op(&[input], Array::from_vec(&shape, out)?, Upsample(factor))
}

/// Pairwise sum; exact for equal power-of-two-sized groups of equal values.
fn pairwise<T: Scalar>(v: &[T]) -> T {
    match v.len() {
        0 => T::zero(),
        1 => v[0],
        n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
    }
}

/// Mean over non-overlapping `factor³` blocks, reduced one axis at a time.
/// For power-of-two factors, pooling an upsampled tensor returns it exactly.
pub fn avgpool3d<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor < 1 {
        return Err(TensorError::InvalidArgument {
            op: "avgpool3d",
            msg: "factor must be >= 1".into(),
        });
    }
    let (planes, dims) = spatial("avgpool3d", input.shape())?;
    for &e in &dims {
        if e % factor != 0 {
            return Err(TensorError::NotDivisible { extent: e, factor });
        }
    }
    let mut data = input.data().to_vec();
    let mut cur = dims;
    let fdiv = T::of(factor as f64);
    let mut group = vec![T::zero(); factor];
    for axis in (0..3).rev() {
        let mut next = cur;
        next[axis] /= factor;
        let inner: usize = cur[axis + 1..].iter().product();
        let outer: usize = planes * cur[..axis].iter().product::<usize>();
        let mut out = vec![T::zero(); outer * next[axis] * inner];
        for o in 0..outer {
            for j in 0..next[axis] {
                for i in 0..inner {
                    for (q, g) in group.iter_mut().enumerate() {
                        *g = data[(o * cur[axis] + j * factor + q) * inner + i];
                    }
                    out[(o * next[axis] + j) * inner + i] = pairwise(&group) / fdiv;
                }
            }
        }
        data = out;
        cur = next;
    }
    let mut shape = input.shape().to_vec();
    shape[2..].copy_from_slice(&cur);
    Tensor::from_op(&[input], Array::from_vec(&shape, data)?, AvgPool(factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn upsample_replicates_octants() {
        let x = Tensor::<f64>::constant(Array::from_f64(&[1, 1, 2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap());
        let y = upsample_nearest3d(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4, 4]);
        for z in 0..4 {
            for yy in 0..4 {
                for xx in 0..4 {
                    let expect = x.data()[((z / 2) * 2 + yy / 2) * 2 + xx / 2];
                    assert_eq!(y.data()[(z * 4 + yy) * 4 + xx], expect);
                }
            }
        }
        assert_eq!(upsample_nearest3d(&x, 1).unwrap().data(), x.data());
        assert!(upsample_nearest3d(&x, 0).is_err());
    }

    #[test]
    fn avgpool_means() {
        let x = Tensor::<f64>::constant(Array::from_f64(&[1, 1, 2, 2, 2], &[0., 1., 2., 3., 4., 5., 6., 7.]).unwrap());
        assert_eq!(avgpool3d(&x, 2).unwrap().data(), &[3.5]);
        let c = Tensor::<f32>::constant(Array::full(&[1, 2, 4, 4, 4], 0.3));
        assert!(avgpool3d(&c, 2).unwrap().data().iter().all(|&v| v == 0.3));
        let bad = Tensor::<f32>::constant(Array::zeros(&[1, 1, 3, 4, 4]));
        assert!(matches!(avgpool3d(&bad, 2), Err(TensorError::NotDivisible { .. })));
    }

    #[test]
    fn x8_pool_of_brain_grid() {
        let x = Tensor::<f32>::constant(Array::zeros(&[1, 1, 80, 96, 112]));
        assert_eq!(avgpool3d(&x, 8).unwrap().shape(), &[1, 1, 10, 12, 14]);
    }

    #[test]
    fn upsample_then_pool_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = Tensor::<f32>::constant(Array::randn(&[2, 3, 3, 4, 5], 1.0, &mut rng));
            let y = avgpool3d(&upsample_nearest3d(&x, 2).unwrap(), 2).unwrap();
            assert_eq!(y.data(), x.data());
        }
    }
}
