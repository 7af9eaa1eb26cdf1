use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Dense row-major array; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed as broadcast into `out` (zero along broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Visits every index of `shape` in row-major order, passing the offsets of
/// each strided operand. The innermost axis is handed over as a run so the
/// callback can loop over it without recomputing offsets.
pub(crate) fn for_each_run<const K: usize>(
    shape: &[usize],
    operand_strides: [&[usize]; K],
    mut f: impl FnMut(usize, [usize; K], usize, [usize; K]),
) {
    let total = numel(shape);
    if total == 0 {
        return;
    }
    if shape.is_empty() {
        f(0, [0; K], 1, [0; K]);
        return;
    }
    let rank = shape.len();
    let inner = shape[rank - 1];
    let inner_strides: [usize; K] = std::array::from_fn(|k| operand_strides[k][rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let mut offs = [0usize; K];
    let mut out = 0;
    loop {
        f(out, offs, inner, inner_strides);
        out += inner;
        // advance the odometer over the outer axes
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            for k in 0..K {
                offs[k] += operand_strides[k][axis];
            }
            if idx[axis] < shape[axis] {
                break;
            }
            for k in 0..K {
                offs[k] -= operand_strides[k][axis] * shape[axis];
            }
            idx[axis] = 0;
        }
    }
}

impl<T: Scalar> Array<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::InvalidArgument {
                op: "from_vec",
                msg: format!("shape {:?} needs {} values, got {}", shape, numel(shape), data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Standard-normal samples scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                T::of(v * std)
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Array<U> {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Only scalar-shaped (single element) arrays have an item.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise binary map with numpy broadcasting.
    pub fn zip_broadcast(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Self {
                shape: self.shape.clone(),
                data,
            });
        }
        let out_shape =
            broadcast_shape(&self.shape, &other.shape).ok_or_else(|| TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            })?;
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let mut data = vec![T::zero(); numel(&out_shape)];
        for_each_run(&out_shape, [&sa, &sb], |out, [oa, ob], len, [ia, ib]| {
            for j in 0..len {
                data[out + j] = f(self.data[oa + j * ia], other.data[ob + j * ib]);
            }
        });
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Materializes `self` broadcast to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        match broadcast_shape(&self.shape, shape) {
            Some(s) if s == shape => {}
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "broadcast_to",
                    lhs: self.shape.clone(),
                    rhs: shape.to_vec(),
                })
            }
        }
        if self.shape == shape {
            return Ok(self.clone());
        }
        let sa = broadcast_strides(&self.shape, shape);
        let mut data = vec![T::zero(); numel(shape)];
        for_each_run(shape, [&sa], |out, [oa], len, [ia]| {
            for j in 0..len {
                data[out + j] = self.data[oa + j * ia];
            }
        });
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Sums over the axes along which `target` is broadcast into `self`.
    /// Accumulates in f64 in row-major order.
    pub fn sum_to(&self, target: &[usize]) -> Result<Self> {
        match broadcast_shape(target, &self.shape) {
            Some(s) if s == self.shape => {}
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "sum_to",
                    lhs: self.shape.clone(),
                    rhs: target.to_vec(),
                })
            }
        }
        if target == self.shape.as_slice() {
            return Ok(self.clone());
        }
        let st = broadcast_strides(target, &self.shape);
        let own = strides(&self.shape);
        let mut acc = vec![0.0f64; numel(target)];
        for_each_run(&self.shape, [&own, &st], |_, [oi, ot], len, [_, it]| {
            if it == 0 {
                let mut s = 0.0;
                for j in 0..len {
                    s += self.data[oi + j].f64();
                }
                acc[ot] += s;
            } else {
                for j in 0..len {
                    acc[ot + j * it] += self.data[oi + j].f64();
                }
            }
        });
        Ok(Self {
            shape: target.to_vec(),
            data: acc.into_iter().map(T::of).collect(),
        })
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.f64()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }
}
