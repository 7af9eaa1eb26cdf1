//! 3D cross-correlation and its two adjoints.
//!
//! `conv3d`, `conv3d_input_grad` and `conv3d_weight_grad` are the three
//! partial contractions of one trilinear form, so each one's vector-Jacobian
//! product is expressed with the other two and the family is differentiable
//! to any order.
//!
//! Stride-1 kernels work on zero-padded planes laid out with the padded row
//! pitch: every tap then becomes one contiguous shifted read and the per-voxel
//! sums accumulate in (input channel, kd, kh, kw) order, the same order as a
//! plain nested loop.

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tensor};

const LANES: usize = 16;

/// Shapes of one convolution problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub output: [usize; 3],
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(
        batch: usize,
        in_channels: usize,
        out_channels: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv3d",
                msg: "stride must be >= 1".into(),
            });
        }
        if input.contains(&0) {
            return Err(TensorError::ZeroExtent {
                op: "conv3d",
                shape: input.to_vec(),
            });
        }
        if kernel.iter().any(|k| k % 2 == 0) {
            return Err(TensorError::EvenKernel(kernel.to_vec()));
        }
        let mut output = [0; 3];
        for i in 0..3 {
            let padded = input[i] + 2 * pad;
            if padded < kernel[i] {
                return Err(TensorError::InvalidArgument {
                    op: "conv3d",
                    msg: format!("kernel {:?} larger than padded input {:?}", kernel, input),
                });
            }
            output[i] = (padded - kernel[i]) / stride + 1;
        }
        Ok(Self {
            batch,
            in_channels,
            out_channels,
            input,
            kernel,
            output,
            stride,
            pad,
        })
    }

    pub fn input_shape(&self) -> [usize; 5] {
        [self.batch, self.in_channels, self.input[0], self.input[1], self.input[2]]
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        [self.out_channels, self.in_channels, self.kernel[0], self.kernel[1], self.kernel[2]]
    }

    pub fn output_shape(&self) -> [usize; 5] {
        [self.batch, self.out_channels, self.output[0], self.output[1], self.output[2]]
    }

    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Geometry of the stride-1 correlation that computes the input gradient.
    fn transposed(&self) -> Self {
        debug_assert_eq!(self.stride, 1);
        Self {
            batch: self.batch,
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            input: self.output,
            kernel: self.kernel,
            output: self.input,
            stride: 1,
            pad: self.kernel[0] - 1 - self.pad,
        }
    }

    fn transposable(&self) -> bool {
        self.stride == 1 && self.kernel.iter().all(|&k| k == self.kernel[0]) && self.pad < self.kernel[0]
    }
}

fn dims5(op: &'static str, shape: &[usize]) -> Result<[usize; 5]> {
    shape.try_into().map_err(|_| TensorError::Rank {
        op,
        expected: 5,
        shape: shape.to_vec(),
    })
}

/// Zero-padded copy of every `[D, H, W]` plane, plus the padded extents.
fn pad_planes<T: Scalar>(x: &[T], planes: usize, dims: [usize; 3], pad: usize) -> (Vec<T>, [usize; 3]) {
    let [d, h, w] = dims;
    let pd = [d + 2 * pad, h + 2 * pad, w + 2 * pad];
    let pvol = pd[0] * pd[1] * pd[2];
    if pad == 0 {
        return (x.to_vec(), pd);
    }
    let mut out = vec![T::zero(); planes * pvol];
    for p in 0..planes {
        let src = &x[p * d * h * w..(p + 1) * d * h * w];
        let dst = &mut out[p * pvol..(p + 1) * pvol];
        for z in 0..d {
            for y in 0..h {
                let s = (z * h + y) * w;
                let o = ((z + pad) * pd[1] + y + pad) * pd[2] + pad;
                dst[o..o + w].copy_from_slice(&src[s..s + w]);
            }
        }
    }
    (out, pd)
}

/// `out[j] = ⟨rows[j], x⟩` for `B` consecutive rows of `x.len()` values.
#[inline]
fn dot_block<T: Scalar, const B: usize>(rows: &[T], x: &[T], out: &mut [T]) {
    let n = x.len();
    assert!(rows.len() == B * n && out.len() >= B);
    let mut lanes = [[T::zero(); LANES]; B];
    let mut i = 0;
    while i + LANES <= n {
        let xs: &[T; LANES] = x[i..i + LANES].try_into().unwrap();
        for (j, a) in lanes.iter_mut().enumerate() {
            let r: &[T; LANES] = rows[j * n + i..j * n + i + LANES].try_into().unwrap();
            for l in 0..LANES {
                a[l] += r[l] * xs[l];
            }
        }
        i += LANES;
    }
    for (j, a) in lanes.iter().enumerate() {
        let mut s = T::zero();
        for &v in a {
            s += v;
        }
        for p in i..n {
            s += rows[j * n + p] * x[p];
        }
        out[j] = s;
    }
}

struct PaddedLayout {
    dims: [usize; 3],
    run: usize,
    offsets: Vec<usize>,
}

impl PaddedLayout {
    fn new(g: &ConvGeometry, padded: [usize; 3]) -> Self {
        let [_, ph, pw] = padded;
        let [od, oh, ow] = g.output;
        let run = (od - 1) * ph * pw + (oh - 1) * pw + ow;
        let mut offsets = Vec::with_capacity(g.taps());
        for a in 0..g.kernel[0] {
            for b in 0..g.kernel[1] {
                for e in 0..g.kernel[2] {
                    offsets.push((a * ph + b) * pw + e);
                }
            }
        }
        Self {
            dims: padded,
            run,
            offsets,
        }
    }

    fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }
}

/// Packs the weights of output channels `k0..k0+B` as `[c][tap][B]`, zero-filling
/// lanes past `out_channels`.
fn pack_weights<T: Scalar, const B: usize>(w: &[T], g: &ConvGeometry, k0: usize) -> Vec<T> {
    let (cin, taps) = (g.in_channels, g.taps());
    let mut wb = vec![T::zero(); cin * taps * B];
    for j in 0..B.min(g.out_channels - k0) {
        for c in 0..cin {
            for t in 0..taps {
                wb[(c * taps + t) * B + j] = w[((k0 + j) * cin + c) * taps + t];
            }
        }
    }
    wb
}

/// Correlates all input planes with `B` packed kernels at once; `acc` holds
/// `B` runs. Each input vector is loaded once and reused by every kernel.
fn correlate_block<T: Scalar, const B: usize>(acc: &mut [T], planes: &[T], pvol: usize, offs: &[usize], wb: &[T], run: usize) {
    let cin = planes.len() / pvol;
    let taps = offs.len();
    assert!(acc.len() >= B * run && wb.len() == cin * taps * B);
    let mut i = 0;
    while i + LANES <= run {
        let mut a = [[T::zero(); LANES]; B];
        for c in 0..cin {
            let plane = &planes[c * pvol..(c + 1) * pvol];
            assert!(plane.len() >= run + offs.iter().copied().max().unwrap_or(0));
            let wc = &wb[c * taps * B..(c + 1) * taps * B];
            for (t, &o) in offs.iter().enumerate() {
                let xs: &[T; LANES] = plane[i + o..i + o + LANES].try_into().unwrap();
                let wt: &[T; B] = wc[t * B..(t + 1) * B].try_into().unwrap();
                for j in 0..B {
                    for l in 0..LANES {
                        a[j][l] += wt[j] * xs[l];
                    }
                }
            }
        }
        for (j, aj) in a.iter().enumerate() {
            acc[j * run + i..j * run + i + LANES].copy_from_slice(aj);
        }
        i += LANES;
    }
    for p in i..run {
        for j in 0..B {
            let mut s = T::zero();
            for c in 0..cin {
                for (t, &o) in offs.iter().enumerate() {
                    s += wb[(c * taps + t) * B + j] * planes[c * pvol + p + o];
                }
            }
            acc[j * run + p] = s;
        }
    }
}

fn forward_stride1<T: Scalar>(x: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    const B: usize = 4;
    let (xp, pd) = pad_planes(x, g.batch * g.in_channels, g.input, g.pad);
    let layout = PaddedLayout::new(g, pd);
    let pvol = layout.volume();
    let run = layout.run;
    let [od, oh, ow] = g.output;
    let ovol = od * oh * ow;
    let mut out = vec![T::zero(); g.batch * g.out_channels * ovol];
    let mut acc = vec![T::zero(); B * run];
    let packed: Vec<(usize, usize, Vec<T>)> = (0..g.out_channels)
        .step_by(B)
        .map(|k0| {
            let kb = B.min(g.out_channels - k0);
            let wb = if kb == B { pack_weights::<T, B>(w, g, k0) } else { pack_weights::<T, 1>(w, g, k0) };
            (k0, kb, wb)
        })
        .collect();
    for n in 0..g.batch {
        let planes = &xp[n * g.in_channels * pvol..(n + 1) * g.in_channels * pvol];
        for (k0, kb, wb) in &packed {
            if *kb == B {
                correlate_block::<T, B>(&mut acc, planes, pvol, &layout.offsets, wb, run);
                scatter_runs(&mut out, &acc, &layout, g, n, *k0, B);
            } else {
                for j in 0..*kb {
                    let wj = pack_weights::<T, 1>(w, g, k0 + j);
                    correlate_block::<T, 1>(&mut acc, planes, pvol, &layout.offsets, &wj, run);
                    scatter_runs(&mut out, &acc, &layout, g, n, k0 + j, 1);
                }
            }
        }
    }
    out
}

/// Copies `count` padded-pitch runs from `acc` into dense output channels.
fn scatter_runs<T: Scalar>(out: &mut [T], acc: &[T], layout: &PaddedLayout, g: &ConvGeometry, n: usize, k0: usize, count: usize) {
    let [od, oh, ow] = g.output;
    let ovol = od * oh * ow;
    for j in 0..count {
        let src = &acc[j * layout.run..(j + 1) * layout.run];
        let dst = &mut out[(n * g.out_channels + k0 + j) * ovol..(n * g.out_channels + k0 + j + 1) * ovol];
        for z in 0..od {
            for y in 0..oh {
                let s = layout.index(z, y, 0);
                let o = (z * oh + y) * ow;
                dst[o..o + ow].copy_from_slice(&src[s..s + ow]);
            }
        }
    }
}

/// Direct strided loops, used when the padded-pitch layout does not apply.
fn forward_direct<T: Scalar>(x: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let (s, p) = (g.stride as isize, g.pad as isize);
    let mut out = vec![T::zero(); g.batch * g.out_channels * od * oh * ow];
    for n in 0..g.batch {
        for k in 0..g.out_channels {
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut sum = T::zero();
                        for c in 0..g.in_channels {
                            for a in 0..kd {
                                let iz = z as isize * s + a as isize - p;
                                if iz < 0 || iz >= d as isize {
                                    continue;
                                }
                                for b in 0..kh {
                                    let iy = y as isize * s + b as isize - p;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for e in 0..kw {
                                        let ix = xo as isize * s + e as isize - p;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let xi = (((n * g.in_channels + c) * d + iz as usize) * h + iy as usize) * wd
                                            + ix as usize;
                                        let wi = (((k * g.in_channels + c) * kd + a) * kh + b) * kw + e;
                                        sum += x[xi] * w[wi];
                                    }
                                }
                            }
                        }
                        out[(((n * g.out_channels + k) * od + z) * oh + y) * ow + xo] = sum;
                    }
                }
            }
        }
    }
    out
}

fn forward_raw<T: Scalar>(x: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    if g.stride == 1 {
        forward_stride1(x, w, g)
    } else {
        forward_direct(x, w, g)
    }
}

fn input_grad_raw<T: Scalar>(dy: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    if g.transposable() {
        // full correlation of dy with the channel-swapped, spatially flipped kernel
        let t = g.transposed();
        let taps = g.taps();
        let mut wt = vec![T::zero(); w.len()];
        for k in 0..g.out_channels {
            for c in 0..g.in_channels {
                let src = &w[(k * g.in_channels + c) * taps..(k * g.in_channels + c + 1) * taps];
                let dst = &mut wt[(c * g.out_channels + k) * taps..(c * g.out_channels + k + 1) * taps];
                for (i, v) in src.iter().enumerate() {
                    dst[taps - 1 - i] = *v;
                }
            }
        }
        return forward_stride1(dy, &wt, &t);
    }
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let (s, p) = (g.stride as isize, g.pad as isize);
    let mut gx = vec![T::zero(); g.batch * g.in_channels * d * h * wd];
    for n in 0..g.batch {
        for k in 0..g.out_channels {
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let gv = dy[(((n * g.out_channels + k) * od + z) * oh + y) * ow + xo];
                        for c in 0..g.in_channels {
                            for a in 0..kd {
                                let iz = z as isize * s + a as isize - p;
                                if iz < 0 || iz >= d as isize {
                                    continue;
                                }
                                for b in 0..kh {
                                    let iy = y as isize * s + b as isize - p;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for e in 0..kw {
                                        let ix = xo as isize * s + e as isize - p;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let xi = (((n * g.in_channels + c) * d + iz as usize) * h + iy as usize) * wd
                                            + ix as usize;
                                        let wi = (((k * g.in_channels + c) * kd + a) * kh + b) * kw + e;
                                        gx[xi] += gv * w[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

fn weight_grad_raw<T: Scalar>(x: &[T], dy: &[T], g: &ConvGeometry) -> Vec<T> {
    let taps = g.taps();
    let mut gw = vec![T::zero(); g.out_channels * g.in_channels * taps];
    let [od, oh, ow] = g.output;
    let ovol = od * oh * ow;
    if g.stride == 1 {
        let (xp, pd) = pad_planes(x, g.batch * g.in_channels, g.input, g.pad);
        let layout = PaddedLayout::new(g, pd);
        let pvol = layout.volume();
        let run = layout.run;
        let mut dyp = vec![T::zero(); g.out_channels * run];
        for n in 0..g.batch {
            for k in 0..g.out_channels {
                let src = &dy[(n * g.out_channels + k) * ovol..(n * g.out_channels + k + 1) * ovol];
                let dst = &mut dyp[k * run..(k + 1) * run];
                for z in 0..od {
                    for y in 0..oh {
                        let d0 = layout.index(z, y, 0);
                        let s0 = (z * oh + y) * ow;
                        dst[d0..d0 + ow].copy_from_slice(&src[s0..s0 + ow]);
                    }
                }
            }
            for c in 0..g.in_channels {
                let plane = &xp[(n * g.in_channels + c) * pvol..(n * g.in_channels + c + 1) * pvol];
                let mut k0 = 0;
                while k0 < g.out_channels {
                    let kb = if g.out_channels - k0 >= 4 { 4 } else { 1 };
                    for (t, &o) in layout.offsets.iter().enumerate() {
                        let xs = &plane[o..o + run];
                        let mut sums = [T::zero(); 4];
                        if kb == 4 {
                            dot_block::<T, 4>(&dyp[k0 * run..(k0 + 4) * run], xs, &mut sums);
                        } else {
                            dot_block::<T, 1>(&dyp[k0 * run..(k0 + 1) * run], xs, &mut sums[..1]);
                        }
                        for (j, v) in sums[..kb].iter().enumerate() {
                            gw[((k0 + j) * g.in_channels + c) * taps + t] += *v;
                        }
                    }
                    k0 += kb;
                }
            }
        }
        return gw;
    }
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let (s, p) = (g.stride as isize, g.pad as isize);
    for n in 0..g.batch {
        for k in 0..g.out_channels {
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let gv = dy[(((n * g.out_channels + k) * od + z) * oh + y) * ow + xo];
                        for c in 0..g.in_channels {
                            for a in 0..kd {
                                let iz = z as isize * s + a as isize - p;
                                if iz < 0 || iz >= d as isize {
                                    continue;
                                }
                                for b in 0..kh {
                                    let iy = y as isize * s + b as isize - p;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for e in 0..kw {
                                        let ix = xo as isize * s + e as isize - p;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let xi = (((n * g.in_channels + c) * d + iz as usize) * h + iy as usize) * wd
                                            + ix as usize;
                                        let wi = (((k * g.in_channels + c) * kd + a) * kh + b) * kw + e;
                                        gw[wi] += gv * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gw
}

struct Conv3d(ConvGeometry);
impl<T: Scalar> Backward<T> for Conv3d {
    fn name(&self) -> &'static str {
        "conv3d"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let gx = if needs[0] { Some(input_grad_op(g, &x[1], self.0)?) } else { None };
        let gw = if needs[1] { Some(weight_grad_op(&x[0], g, self.0)?) } else { None };
        Ok(vec![gx, gw])
    }
}

struct InputGrad(ConvGeometry);
impl<T: Scalar> Backward<T> for InputGrad {
    fn name(&self) -> &'static str {
        "conv3d_input_grad"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        // inputs: (dy, w); output has the shape of the conv input
        let gdy = if needs[0] { Some(conv_op(g, &x[1], self.0)?) } else { None };
        let gw = if needs[1] { Some(weight_grad_op(g, &x[0], self.0)?) } else { None };
        Ok(vec![gdy, gw])
    }
}

struct WeightGrad(ConvGeometry);
impl<T: Scalar> Backward<T> for WeightGrad {
    fn name(&self) -> &'static str {
        "conv3d_weight_grad"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        // inputs: (x, dy); output has the shape of the weight
        let gx = if needs[0] { Some(input_grad_op(&x[1], g, self.0)?) } else { None };
        let gdy = if needs[1] { Some(conv_op(&x[0], g, self.0)?) } else { None };
        Ok(vec![gx, gdy])
    }
}

fn conv_op<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeometry) -> Result<Tensor<T>> {
    let data = forward_raw(x.data(), w.data(), &g);
    Tensor::from_op(&[x, w], Array::from_vec(&g.output_shape(), data)?, Conv3d(g))
}

fn input_grad_op<T: Scalar>(dy: &Tensor<T>, w: &Tensor<T>, g: ConvGeometry) -> Result<Tensor<T>> {
    let data = input_grad_raw(dy.data(), w.data(), &g);
    Tensor::from_op(&[dy, w], Array::from_vec(&g.input_shape(), data)?, InputGrad(g))
}

fn weight_grad_op<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, g: ConvGeometry) -> Result<Tensor<T>> {
    let data = weight_grad_raw(x.data(), dy.data(), &g);
    Tensor::from_op(&[x, dy], Array::from_vec(&g.weight_shape(), data)?, WeightGrad(g))
}

/// 3D cross-correlation: `input [N,C,D,H,W]`, `weight [K,C,kd,kh,kw]`,
/// optional `bias [K]`. Output extent per axis is `(D + 2·pad − kd)/stride + 1`.
pub fn conv3d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let [n, c, d, h, w] = dims5("conv3d input", input.shape())?;
    let [k, wc, kd, kh, kw] = dims5("conv3d weight", weight.shape())?;
    if c != wc {
        return Err(TensorError::ChannelMismatch { input: c, weight: wc });
    }
    let g = ConvGeometry::new(n, c, k, [d, h, w], [kd, kh, kw], stride, pad)?;
    let y = conv_op(input, weight, g)?;
    match bias {
        None => Ok(y),
        Some(b) => {
            if b.shape() != [k] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv3d bias",
                    lhs: b.shape().to_vec(),
                    rhs: vec![k],
                });
            }
            y.add(&b.reshape(&[1, k, 1, 1, 1])?)
        }
    }
}

/// Adjoint of `conv3d` with respect to its input.
pub fn conv3d_input_grad<T: Scalar>(
    dy: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    input_spatial: [usize; 3],
) -> Result<Tensor<T>> {
    let [n, k, ..] = dims5("conv3d_input_grad dy", dy.shape())?;
    let [wk, c, kd, kh, kw] = dims5("conv3d_input_grad weight", weight.shape())?;
    if k != wk {
        return Err(TensorError::ChannelMismatch { input: k, weight: wk });
    }
    let g = ConvGeometry::new(n, c, k, input_spatial, [kd, kh, kw], stride, pad)?;
    if g.output_shape() != dims5("conv3d_input_grad dy", dy.shape())? {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d_input_grad",
            lhs: dy.shape().to_vec(),
            rhs: g.output_shape().to_vec(),
        });
    }
    input_grad_op(dy, weight, g)
}

/// Adjoint of `conv3d` with respect to its weight.
pub fn conv3d_weight_grad<T: Scalar>(
    input: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    kernel: [usize; 3],
) -> Result<Tensor<T>> {
    let [n, c, d, h, w] = dims5("conv3d_weight_grad input", input.shape())?;
    let [dn, k, ..] = dims5("conv3d_weight_grad dy", dy.shape())?;
    let g = ConvGeometry::new(n, c, k, [d, h, w], kernel, stride, pad)?;
    if dn != n || g.output_shape() != dims5("conv3d_weight_grad dy", dy.shape())? {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d_weight_grad",
            lhs: dy.shape().to_vec(),
            rhs: g.output_shape().to_vec(),
        });
    }
    weight_grad_op(input, dy, g)
}
