use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::conv::Conv2dSpec;
use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::op::Op;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

impl TensorId {
    fn next() -> Self {
        static COUNTER: AtomicU64 = AtomicU64::new(1);
        Self(COUNTER.fetch_add(1, Ordering::Relaxed))
    }
}

struct Inner {
    id: TensorId,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    op: Option<Op>,
    variable: bool,
}

/// Immutable dense tensor of `f64`, cheap to clone.
///
/// A tensor carries its producing op only when one of the op inputs requires
/// grad, so constant subexpressions never enter the graph.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::EmptyShape(shape.to_vec()));
    }
    Ok(())
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// (outer, len, inner) block structure around `axis`.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, op: Option<Op>, variable: bool) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        Self(Arc::new(Inner {
            id: TensorId::next(),
            shape,
            data: Arc::new(data),
            op,
            variable,
        }))
    }

    /// Output of an op; the op is recorded only if a parent requires grad.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op) -> Self {
        let tracked = op.parents().iter().any(|p| p.requires_grad());
        Self::build(data, shape, tracked.then_some(op), false)
    }

    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if data.len() != numel(shape) {
            return Err(Error::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self::build(data, shape.to_vec(), None, false))
    }

    /// Leaf that requires grad.
    pub fn var(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        Ok(t.to_var())
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self::build(vec![value; numel(shape)], shape.to_vec(), None, false))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![value], vec![1], None, false)
    }

    pub fn zeros_like(&self) -> Self {
        Self::build(vec![0.0; self.numel()], self.shape().to_vec(), None, false)
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        Ok(self.0.data[0])
    }

    pub fn is_variable(&self) -> bool {
        self.0.variable
    }

    pub fn requires_grad(&self) -> bool {
        self.0.variable || self.0.op.is_some()
    }

    pub(crate) fn op(&self) -> Option<&Op> {
        self.0.op.as_ref()
    }

    /// Same values, cut from the graph. Shares the underlying buffer.
    pub fn detach(&self) -> Self {
        Self(Arc::new(Inner {
            id: TensorId::next(),
            shape: self.0.shape.clone(),
            data: Arc::clone(&self.0.data),
            op: None,
            variable: false,
        }))
    }

    /// Detached copy promoted to a grad-requiring leaf.
    pub fn to_var(&self) -> Self {
        Self(Arc::new(Inner {
            id: TensorId::next(),
            shape: self.0.shape.clone(),
            data: Arc::clone(&self.0.data),
            op: None,
            variable: true,
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self::from_op(
            self.to_vec(),
            shape.to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect()
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.data().iter().map(|&a| f(a)).collect()
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.same_shape(other, "add")?;
        let data = self.zip_map(other, |a, b| a + b);
        Ok(Self::from_op(data, self.shape().to_vec(), Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let data = self.zip_map(other, |a, b| a - b);
        Ok(Self::from_op(data, self.shape().to_vec(), Op::Sub(self.clone(), other.clone())))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.same_shape(other, "mul")?;
        let data = self.zip_map(other, |a, b| a * b);
        Ok(Self::from_op(data, self.shape().to_vec(), Op::Mul(self.clone(), other.clone())))
    }

    /// `mul · x + add`, elementwise.
    pub fn affine(&self, mul: f64, add: f64) -> Self {
        let data = self.map(|a| mul * a + add);
        Self::from_op(data, self.shape().to_vec(), Op::Affine { arg: self.clone(), mul })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.affine(s, 0.0)
    }

    pub fn neg(&self) -> Self {
        self.affine(-1.0, 0.0)
    }

    pub fn square(&self) -> Self {
        let data = self.map(|a| a * a);
        Self::from_op(data, self.shape().to_vec(), Op::Square(self.clone()))
    }

    pub fn relu(&self) -> Self {
        let data = self.map(|a| a.max(0.0));
        Self::from_op(data, self.shape().to_vec(), Op::Relu(self.clone()))
    }

    pub fn tanh(&self) -> Self {
        let data = self.map(f64::tanh);
        Self::from_op(data, self.shape().to_vec(), Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Self {
        let data = self.map(|a| 1.0 / (1.0 + (-a).exp()));
        Self::from_op(data, self.shape().to_vec(), Op::Sigmoid(self.clone()))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(&self) -> Self {
        let s = self.data().iter().sum();
        Self::from_op(vec![s], vec![1], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Self {
        let s: f64 = self.data().iter().sum();
        Self::from_op(vec![s / self.numel() as f64], vec![1], Op::Mean(self.clone()))
    }

    /// Mean over entries where `mask` is nonzero; 0 for an empty mask.
    /// The mask is treated as a constant.
    pub fn masked_mean(&self, mask: &Tensor) -> Result<Self> {
        self.same_shape(mask, "masked_mean")?;
        let mask = mask.detach();
        let count = mask.data().iter().filter(|&&m| m != 0.0).count();
        let total: f64 = self
            .data()
            .iter()
            .zip(mask.data())
            .filter(|(_, &m)| m != 0.0)
            .map(|(&a, _)| a)
            .sum();
        let value = if count == 0 { 0.0 } else { total / count as f64 };
        Ok(Self::from_op(
            vec![value],
            vec![1],
            Op::MaskedMean { arg: self.clone(), mask, count },
        ))
    }

    /// Expands a single-element tensor to `shape`.
    pub fn broadcast_scalar(&self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if self.numel() != 1 {
            return Err(Error::InvalidArgument {
                op: "broadcast_scalar",
                msg: format!("expected a single element, got shape {:?}", self.shape()),
            });
        }
        let data = vec![self.data()[0]; numel(shape)];
        Ok(Self::from_op(data, shape.to_vec(), Op::BroadcastScalar(self.clone())))
    }

    /// Expands a `[C]` tensor along axis 1 of `shape` (`[N, C, ...]`).
    pub fn broadcast_channel(&self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if self.rank() != 1 || shape.len() < 2 || shape[1] != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "broadcast_channel",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let (outer, c, inner) = axis_blocks(shape, 1);
        let mut data = Vec::with_capacity(numel(shape));
        for _ in 0..outer {
            for ci in 0..c {
                data.extend(std::iter::repeat(self.data()[ci]).take(inner));
            }
        }
        Ok(Self::from_op(data, shape.to_vec(), Op::BroadcastChannel(self.clone())))
    }

    /// Sums every axis but axis 1, giving a `[C]` tensor.
    pub fn channel_sum(&self) -> Result<Self> {
        if self.rank() < 2 {
            return Err(Error::InvalidArgument {
                op: "channel_sum",
                msg: format!("needs rank >= 2, got {:?}", self.shape()),
            });
        }
        let (outer, c, inner) = axis_blocks(self.shape(), 1);
        let mut data = vec![0.0; c];
        for o in 0..outer {
            for (ci, acc) in data.iter_mut().enumerate() {
                let start = (o * c + ci) * inner;
                *acc += self.data()[start..start + inner].iter().sum::<f64>();
            }
        }
        Ok(Self::from_op(data, vec![c], Op::ChannelSum(self.clone())))
    }

    /// Adds a per-channel bias `[C]` to an `[N, C, ...]` tensor.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Self> {
        self.add(&bias.broadcast_channel(self.shape())?)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let (m, k, n) = (self.shape()[0], self.shape()[1], other.shape()[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.data(), false, other.data(), false, 0.0, &mut out);
        Ok(Self::from_op(out, vec![m, n], Op::MatMul(self.clone(), other.clone())))
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::InvalidArgument {
                op: "transpose",
                msg: format!("needs a matrix, got {:?}", self.shape()),
            });
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        let src = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(Self::from_op(out, vec![c, r], Op::Transpose(self.clone())))
    }

    fn conv_geometry(
        op: &'static str,
        input: &[usize],
        kernel: &[usize],
        spec: &Conv2dSpec,
    ) -> Result<(ConvGeometry, usize, usize)> {
        let mismatch = || Error::ShapeMismatch {
            op,
            lhs: input.to_vec(),
            rhs: kernel.to_vec(),
        };
        if input.len() != 4 || kernel.len() != 4 || kernel[2] != kernel[3] || input[1] != kernel[1] {
            return Err(mismatch());
        }
        let k = kernel[2];
        let (n, cin, h, w) = (input[0], input[1], input[2], input[3]);
        let ho = spec.output_len(h, k).ok_or_else(mismatch)?;
        let wo = spec.output_len(w, k).ok_or_else(mismatch)?;
        Ok((ConvGeometry::new(cin, h, w, k, ho, wo, spec), n, kernel[0]))
    }

    /// Cross-correlation of `[N, Cin, H, W]` with a `[Cout, Cin, k, k]` kernel.
    pub fn conv2d(&self, kernel: &Tensor, spec: Conv2dSpec) -> Result<Self> {
        let (geo, n, cout) = Self::conv_geometry("conv2d", self.shape(), kernel.shape(), &spec)?;
        let (rows, plane) = (geo.col_rows(), geo.ho * geo.wo);
        let in_plane = geo.cin * geo.h * geo.w;
        let mut out = vec![0.0; n * cout * plane];
        let mut col = if geo.is_identity() { Vec::new() } else { vec![0.0; geo.col_len()] };
        for b in 0..n {
            let x = &self.data()[b * in_plane..(b + 1) * in_plane];
            let cols: &[f64] = if geo.is_identity() {
                x
            } else {
                geo.im2col(x, &mut col);
                &col
            };
            let dst = &mut out[b * cout * plane..(b + 1) * cout * plane];
            kernels::gemm(cout, rows, plane, kernel.data(), false, cols, false, 0.0, dst);
        }
        Ok(Self::from_op(
            out,
            vec![n, cout, geo.ho, geo.wo],
            Op::Conv2d {
                input: self.clone(),
                kernel: kernel.clone(),
                spec,
            },
        ))
    }

    /// Adjoint of `conv2d` in its input: maps an output-shaped `self` back to
    /// an input of spatial extent `input_hw`.
    pub fn conv2d_input_grad(
        &self,
        kernel: &Tensor,
        spec: Conv2dSpec,
        input_hw: (usize, usize),
    ) -> Result<Self> {
        let ks = kernel.shape();
        if self.rank() != 4 || ks.len() != 4 || self.shape()[1] != ks[0] {
            return Err(Error::ShapeMismatch {
                op: "conv2d_input_grad",
                lhs: self.shape().to_vec(),
                rhs: ks.to_vec(),
            });
        }
        let n = self.shape()[0];
        let input_shape = [n, ks[1], input_hw.0, input_hw.1];
        let (geo, _, cout) = Self::conv_geometry("conv2d_input_grad", &input_shape, ks, &spec)?;
        if geo.ho != self.shape()[2] || geo.wo != self.shape()[3] {
            return Err(Error::ShapeMismatch {
                op: "conv2d_input_grad",
                lhs: self.shape().to_vec(),
                rhs: input_shape.to_vec(),
            });
        }
        let (rows, plane) = (geo.col_rows(), geo.ho * geo.wo);
        let in_plane = geo.cin * geo.h * geo.w;
        let mut out = vec![0.0; n * in_plane];
        let mut col = vec![0.0; geo.col_len()];
        for b in 0..n {
            let g = &self.data()[b * cout * plane..(b + 1) * cout * plane];
            let dst = &mut out[b * in_plane..(b + 1) * in_plane];
            if geo.is_identity() {
                kernels::gemm(rows, cout, plane, kernel.data(), true, g, false, 0.0, dst);
            } else {
                kernels::gemm(rows, cout, plane, kernel.data(), true, g, false, 0.0, &mut col);
                geo.col2im(&col, dst);
            }
        }
        Ok(Self::from_op(
            out,
            input_shape.to_vec(),
            Op::ConvInputGrad {
                grad_out: self.clone(),
                kernel: kernel.clone(),
                spec,
            },
        ))
    }

    /// Adjoint of `conv2d` in its kernel: correlates `self` (the conv input)
    /// with an output-shaped `grad_out`, giving a `[Cout, Cin, k, k]` tensor.
    pub fn conv2d_kernel_grad(&self, grad_out: &Tensor, spec: Conv2dSpec, k: usize) -> Result<Self> {
        let gs = grad_out.shape();
        if self.rank() != 4 || gs.len() != 4 || self.shape()[0] != gs[0] {
            return Err(Error::ShapeMismatch {
                op: "conv2d_kernel_grad",
                lhs: self.shape().to_vec(),
                rhs: gs.to_vec(),
            });
        }
        let kernel_shape = [gs[1], self.shape()[1], k, k];
        let (geo, n, cout) = Self::conv_geometry("conv2d_kernel_grad", self.shape(), &kernel_shape, &spec)?;
        if geo.ho != gs[2] || geo.wo != gs[3] {
            return Err(Error::ShapeMismatch {
                op: "conv2d_kernel_grad",
                lhs: self.shape().to_vec(),
                rhs: gs.to_vec(),
            });
        }
        let (rows, plane) = (geo.col_rows(), geo.ho * geo.wo);
        let in_plane = geo.cin * geo.h * geo.w;
        let mut out = vec![0.0; cout * rows];
        let mut col = if geo.is_identity() { Vec::new() } else { vec![0.0; geo.col_len()] };
        for b in 0..n {
            let x = &self.data()[b * in_plane..(b + 1) * in_plane];
            let cols: &[f64] = if geo.is_identity() {
                x
            } else {
                geo.im2col(x, &mut col);
                &col
            };
            let g = &grad_out.data()[b * cout * plane..(b + 1) * cout * plane];
            kernels::gemm(cout, plane, rows, g, false, cols, true, 1.0, &mut out);
        }
        Ok(Self::from_op(
            out,
            kernel_shape.to_vec(),
            Op::ConvKernelGrad {
                input: self.clone(),
                grad_out: grad_out.clone(),
                spec,
            },
        ))
    }

    fn spatial_check(&self, op: &'static str) -> Result<()> {
        if self.rank() < 2 {
            return Err(Error::InvalidArgument {
                op,
                msg: format!("needs rank >= 2, got {:?}", self.shape()),
            });
        }
        Ok(())
    }

    /// Central difference along the last axis (columns), circular.
    pub fn grad_x(&self) -> Result<Self> {
        self.spatial_check("grad_x")?;
        let (outer, len, inner) = axis_blocks(self.shape(), self.rank() - 1);
        let data = kernels::central_diff(self.data(), outer, len, inner);
        Ok(Self::from_op(data, self.shape().to_vec(), Op::GradX(self.clone())))
    }

    /// Central difference along the second-to-last axis (rows), circular.
    pub fn grad_y(&self) -> Result<Self> {
        self.spatial_check("grad_y")?;
        let (outer, len, inner) = axis_blocks(self.shape(), self.rank() - 2);
        let data = kernels::central_diff(self.data(), outer, len, inner);
        Ok(Self::from_op(data, self.shape().to_vec(), Op::GradY(self.clone())))
    }

    pub fn cat(tensors: &[Tensor], axis: usize) -> Result<Self> {
        let first = tensors.first().ok_or(Error::InvalidArgument {
            op: "cat",
            msg: "no tensors".into(),
        })?;
        if axis >= first.rank() {
            return Err(Error::InvalidArgument {
                op: "cat",
                msg: format!("axis {axis} out of range for {:?}", first.shape()),
            });
        }
        for t in tensors {
            let compatible = t.rank() == first.rank()
                && t.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "cat",
                    lhs: first.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let (outer, _, inner) = axis_blocks(first.shape(), axis);
        let total: usize = tensors.iter().map(|t| t.shape()[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for t in tensors {
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Self::from_op(data, shape, Op::Cat { args: tensors.to_vec(), axis }))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return Err(Error::InvalidArgument {
                op: "narrow",
                msg: format!("range {start}+{len} on axis {axis} of {:?}", self.shape()),
            });
        }
        let (outer, full, inner) = axis_blocks(self.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Self::from_op(data, shape, Op::Narrow { arg: self.clone(), axis, start }))
    }

    /// Zero-embeds `self` at offset `start` of an axis of extent `total`
    /// (adjoint of `narrow`).
    pub fn pad_axis(&self, axis: usize, start: usize, total: usize) -> Result<Self> {
        if axis >= self.rank() || start + self.shape()[axis] > total {
            return Err(Error::InvalidArgument {
                op: "pad_axis",
                msg: format!("offset {start} into {total} on axis {axis} of {:?}", self.shape()),
            });
        }
        let (outer, len, inner) = axis_blocks(self.shape(), axis);
        let mut data = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let dst = (o * total + start) * inner;
            data[dst..dst + len * inner].copy_from_slice(&self.data()[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = total;
        Ok(Self::from_op(data, shape, Op::PadAxis { arg: self.clone(), axis, start }))
    }

    fn planes(&self, op: &'static str, even: bool) -> Result<(usize, usize, usize)> {
        self.spatial_check(op)?;
        let r = self.rank();
        let (h, w) = (self.shape()[r - 2], self.shape()[r - 1]);
        if even && (h % 2 != 0 || w % 2 != 0) {
            return Err(Error::InvalidArgument {
                op,
                msg: format!("spatial extents must be even, got {:?}", self.shape()),
            });
        }
        Ok((self.numel() / (h * w), h, w))
    }

    fn with_spatial(&self, h: usize, w: usize) -> Vec<usize> {
        let mut shape = self.shape().to_vec();
        let r = shape.len();
        shape[r - 2] = h;
        shape[r - 1] = w;
        shape
    }

    /// 2×2 average pooling over the last two axes.
    pub fn avg_pool2(&self) -> Result<Self> {
        let (p, h, w) = self.planes("avg_pool2", true)?;
        let data = kernels::avg_pool2(self.data(), p, h, w);
        Ok(Self::from_op(data, self.with_spatial(h / 2, w / 2), Op::AvgPool2(self.clone())))
    }

    pub fn avg_pool2_adjoint(&self) -> Result<Self> {
        let (p, h, w) = self.planes("avg_pool2_adjoint", false)?;
        let data = kernels::avg_pool2_adjoint(self.data(), p, h, w);
        Ok(Self::from_op(data, self.with_spatial(2 * h, 2 * w), Op::AvgPool2Adjoint(self.clone())))
    }

    /// Bilinear ×2 upsampling over the last two axes, circular.
    pub fn upsample2(&self) -> Result<Self> {
        let (p, h, w) = self.planes("upsample2", false)?;
        let data = kernels::upsample2(self.data(), p, h, w);
        Ok(Self::from_op(data, self.with_spatial(2 * h, 2 * w), Op::Upsample2(self.clone())))
    }

    pub fn upsample2_adjoint(&self) -> Result<Self> {
        let (p, h, w) = self.planes("upsample2_adjoint", true)?;
        let data = kernels::upsample2_adjoint(self.data(), p, h / 2, w / 2);
        Ok(Self::from_op(data, self.with_spatial(h / 2, w / 2), Op::Upsample2Adjoint(self.clone())))
    }
}
