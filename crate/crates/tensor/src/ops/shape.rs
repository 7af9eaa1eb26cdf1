use crate::array::{numel, strides, Array};
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tensor};

struct Reshape(Vec<usize>);
impl<T: Scalar> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.reshape(&self.0)?)])
    }
}

struct SumTo(Vec<usize>);
impl<T: Scalar> Backward<T> for SumTo {
    fn name(&self) -> &'static str {
        "sum_to"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.broadcast_to(&self.0)?)])
    }
}

struct BroadcastTo(Vec<usize>);
impl<T: Scalar> Backward<T> for BroadcastTo {
    fn name(&self) -> &'static str {
        "broadcast_to"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.sum_to(&self.0)?)])
    }
}

struct Narrow {
    axis: usize,
    start: usize,
    extent: usize,
}
impl<T: Scalar> Backward<T> for Narrow {
    fn name(&self) -> &'static str {
        "narrow"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let after = self.extent - self.start - g.shape()[self.axis];
        Ok(vec![Some(g.pad_axis(self.axis, self.start, after)?)])
    }
}

struct PadAxis {
    axis: usize,
    before: usize,
    len: usize,
}
impl<T: Scalar> Backward<T> for PadAxis {
    fn name(&self) -> &'static str {
        "pad_axis"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.narrow(self.axis, self.before, self.len)?)])
    }
}

struct Concat {
    axis: usize,
    sizes: Vec<usize>,
}
impl<T: Scalar> Backward<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(self.sizes.len());
        for (i, &s) in self.sizes.iter().enumerate() {
            out.push(if needs[i] { Some(g.narrow(self.axis, start, s)?) } else { None });
            start += s;
        }
        Ok(out)
    }
}

struct Transpose;
impl<T: Scalar> Backward<T> for Transpose {
    fn name(&self) -> &'static str {
        "transpose"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.transpose()?)])
    }
}

/// Copies `[outer, extent, inner]`-shaped blocks between buffers.
fn copy_axis_block<T: Copy>(
    src: &[T],
    src_extent: usize,
    src_start: usize,
    dst: &mut [T],
    dst_extent: usize,
    dst_start: usize,
    len: usize,
    outer: usize,
    inner: usize,
) {
    for o in 0..outer {
        let s = (o * src_extent + src_start) * inner;
        let d = (o * dst_extent + dst_start) * inner;
        dst[d..d + len * inner].copy_from_slice(&src[s..s + len * inner]);
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidArgument {
            op,
            msg: format!("axis {axis} out of range for shape {shape:?}"),
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let value = self.value().clone().reshaped(shape)?;
        Tensor::from_op(&[self], value, Reshape(self.shape().to_vec()))
    }

    /// Reduces by summation onto a shape that broadcasts back to `self`.
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        let value = self.value().sum_to(shape)?;
        Tensor::from_op(&[self], value, SumTo(self.shape().to_vec()))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        let value = self.value().broadcast_to(shape)?;
        Tensor::from_op(&[self], value, BroadcastTo(self.shape().to_vec()))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        self.sum_to(&[])
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel().max(1) as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// Sums over `axes`, keeping them as extent-1 dims when `keepdim`.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        for &a in axes {
            check_axis("sum_axes", self.shape(), a)?;
        }
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
            .collect();
        let s = self.sum_to(&kept)?;
        if keepdim {
            Ok(s)
        } else {
            let squeezed: Vec<usize> = self
                .shape()
                .iter()
                .enumerate()
                .filter(|(i, _)| !axes.contains(i))
                .map(|(_, &d)| d)
                .collect();
            s.reshape(&squeezed)
        }
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        self.sum_axes(axes, keepdim)?.scale(1.0 / count.max(1) as f64)
    }

    /// Euclidean norm over `axes` (dropped from the result).
    pub fn l2_norm(&self, axes: &[usize]) -> Result<Tensor<T>> {
        self.square()?.sum_axes(axes, false)?.sqrt()
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        check_axis("narrow", self.shape(), axis)?;
        let shape = self.shape();
        if start + len > shape[axis] {
            return Err(TensorError::InvalidArgument {
                op: "narrow",
                msg: format!("range {start}..{} exceeds extent {}", start + len, shape[axis]),
            });
        }
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = vec![T::zero(); numel(&out_shape)];
        copy_axis_block(self.data(), shape[axis], start, &mut data, len, 0, len, outer, inner);
        let value = Array::from_vec(&out_shape, data)?;
        Tensor::from_op(
            &[self],
            value,
            Narrow {
                axis,
                start,
                extent: shape[axis],
            },
        )
    }

    /// Zero-pads along `axis`.
    pub fn pad_axis(&self, axis: usize, before: usize, after: usize) -> Result<Tensor<T>> {
        check_axis("pad_axis", self.shape(), axis)?;
        let shape = self.shape();
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = before + shape[axis] + after;
        let mut data = vec![T::zero(); numel(&out_shape)];
        copy_axis_block(self.data(), shape[axis], 0, &mut data, out_shape[axis], before, shape[axis], outer, inner);
        let value = Array::from_vec(&out_shape, data)?;
        Tensor::from_op(
            &[self],
            value,
            PadAxis {
                axis,
                before,
                len: shape[axis],
            },
        )
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        check_axis("concat", first.shape(), axis)?;
        let base = first.shape();
        for p in parts {
            let ok = p.shape().len() == base.len()
                && p.shape().iter().zip(base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let mut out_shape = base.to_vec();
        out_shape[axis] = total;
        let mut data = vec![T::zero(); numel(&out_shape)];
        let mut start = 0;
        for (p, &s) in parts.iter().zip(&sizes) {
            copy_axis_block(p.data(), s, 0, &mut data, total, start, s, outer, inner);
            start += s;
        }
        let value = Array::from_vec(&out_shape, data)?;
        Tensor::from_op(parts, value, Concat { axis, sizes })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let &[r, c] = self.shape() else {
            return Err(TensorError::Rank {
                op: "transpose",
                expected: 2,
                shape: self.shape().to_vec(),
            });
        };
        let src = self.data();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Tensor::from_op(&[self], Array::from_vec(&[c, r], data)?, Transpose)
    }
}

/// Row-major element offset of a multi-index.
pub fn offset_of(shape: &[usize], index: &[usize]) -> usize {
    strides(shape).iter().zip(index).map(|(s, i)| s * i).sum()
}
