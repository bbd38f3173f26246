use crate::conv::Conv2dSpec;
use crate::error::Result;
use crate::tensor::Tensor;

/// Recorded op with the inputs its backward needs.
///
/// Every backward rule is written in terms of other tensor ops, so the
/// gradients it produces are themselves graph nodes when `create_graph` is on.
#[derive(Clone)]
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Affine { arg: Tensor, mul: f64 },
    Square(Tensor),
    Relu(Tensor),
    Tanh(Tensor),
    Sigmoid(Tensor),
    Sum(Tensor),
    Mean(Tensor),
    MaskedMean { arg: Tensor, mask: Tensor, count: usize },
    BroadcastScalar(Tensor),
    BroadcastChannel(Tensor),
    ChannelSum(Tensor),
    Reshape(Tensor),
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Conv2d { input: Tensor, kernel: Tensor, spec: Conv2dSpec },
    ConvInputGrad { grad_out: Tensor, kernel: Tensor, spec: Conv2dSpec },
    ConvKernelGrad { input: Tensor, grad_out: Tensor, spec: Conv2dSpec },
    GradX(Tensor),
    GradY(Tensor),
    Cat { args: Vec<Tensor>, axis: usize },
    Narrow { arg: Tensor, axis: usize, start: usize },
    PadAxis { arg: Tensor, axis: usize, start: usize },
    AvgPool2(Tensor),
    AvgPool2Adjoint(Tensor),
    Upsample2(Tensor),
    Upsample2Adjoint(Tensor),
}

impl Op {
    pub fn parents(&self) -> Vec<&Tensor> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![a, b],
            Conv2d { input, kernel, .. } => vec![input, kernel],
            ConvInputGrad { grad_out, kernel, .. } => vec![grad_out, kernel],
            ConvKernelGrad { input, grad_out, .. } => vec![input, grad_out],
            Cat { args, .. } => args.iter().collect(),
            Affine { arg, .. }
            | MaskedMean { arg, .. }
            | Narrow { arg, .. }
            | PadAxis { arg, .. } => vec![arg],
            Square(a) | Relu(a) | Tanh(a) | Sigmoid(a) | Sum(a) | Mean(a) | BroadcastScalar(a)
            | BroadcastChannel(a) | ChannelSum(a) | Reshape(a) | Transpose(a) | GradX(a)
            | GradY(a) | AvgPool2(a) | AvgPool2Adjoint(a) | Upsample2(a) | Upsample2Adjoint(a) => {
                vec![a]
            }
        }
    }

    /// Vector-Jacobian product: one gradient per entry of `parents()`.
    ///
    /// `out` is the tensor this op produced. When `create_graph` is false all
    /// inputs are detached first so no new graph is recorded.
    pub fn backward(&self, out: &Tensor, grad: &Tensor, create_graph: bool) -> Result<Vec<Tensor>> {
        use Op::*;
        let d = |t: &Tensor| if create_graph { t.clone() } else { t.detach() };
        let g = d(grad);
        let grads = match self {
            Add(_, _) => vec![g.clone(), g],
            Sub(_, _) => vec![g.clone(), g.neg()],
            Mul(a, b) => vec![g.mul(&d(b))?, g.mul(&d(a))?],
            Affine { mul, .. } => vec![g.scale(*mul)],
            Square(a) => vec![g.mul(&d(a))?.scale(2.0)],
            Relu(a) => {
                let step: Vec<f64> = a.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                vec![g.mul(&Tensor::new(step, a.shape())?)?]
            }
            Tanh(_) => {
                let y = d(out);
                vec![g.mul(&y.square().affine(-1.0, 1.0))?]
            }
            Sigmoid(_) => {
                let y = d(out);
                vec![g.mul(&y.mul(&y.affine(-1.0, 1.0))?)?]
            }
            Sum(a) => vec![g.broadcast_scalar(a.shape())?],
            Mean(a) => vec![g.broadcast_scalar(a.shape())?.scale(1.0 / a.numel() as f64)],
            MaskedMean { arg, mask, count } => {
                if *count == 0 {
                    vec![arg.zeros_like()]
                } else {
                    vec![g.broadcast_scalar(arg.shape())?.mul(mask)?.scale(1.0 / *count as f64)]
                }
            }
            BroadcastScalar(a) => vec![g.sum().reshape(a.shape())?],
            BroadcastChannel(_) => vec![g.channel_sum()?],
            ChannelSum(a) => vec![g.broadcast_channel(a.shape())?],
            Reshape(a) => vec![g.reshape(a.shape())?],
            MatMul(a, b) => {
                let (a, b) = (d(a), d(b));
                vec![g.matmul(&b.transpose()?)?, a.transpose()?.matmul(&g)?]
            }
            Transpose(_) => vec![g.transpose()?],
            Conv2d { input, kernel, spec } => {
                let (x, k) = (d(input), d(kernel));
                let hw = (x.shape()[2], x.shape()[3]);
                vec![
                    g.conv2d_input_grad(&k, *spec, hw)?,
                    x.conv2d_kernel_grad(&g, *spec, k.shape()[2])?,
                ]
            }
            ConvInputGrad { grad_out, kernel, spec } => {
                // <Ct(go, k), u> = <conv(u, k), go>
                let (go, k) = (d(grad_out), d(kernel));
                vec![g.conv2d(&k, *spec)?, g.conv2d_kernel_grad(&go, *spec, k.shape()[2])?]
            }
            ConvKernelGrad { input, grad_out, spec } => {
                // <Cw(x, go), u> = <conv(x, u), go>
                let (x, go) = (d(input), d(grad_out));
                let hw = (x.shape()[2], x.shape()[3]);
                vec![go.conv2d_input_grad(&g, *spec, hw)?, x.conv2d(&g, *spec)?]
            }
            // Circular central differences are antisymmetric.
            GradX(_) => vec![g.grad_x()?.neg()],
            GradY(_) => vec![g.grad_y()?.neg()],
            Cat { args, axis } => {
                let mut start = 0;
                let mut out = Vec::with_capacity(args.len());
                for a in args {
                    let len = a.shape()[*axis];
                    out.push(g.narrow(*axis, start, len)?);
                    start += len;
                }
                out
            }
            Narrow { arg, axis, start } => vec![g.pad_axis(*axis, *start, arg.shape()[*axis])?],
            PadAxis { arg, axis, start } => vec![g.narrow(*axis, *start, arg.shape()[*axis])?],
            AvgPool2(_) => vec![g.avg_pool2_adjoint()?],
            AvgPool2Adjoint(_) => vec![g.avg_pool2()?],
            Upsample2(_) => vec![g.upsample2_adjoint()?],
            Upsample2Adjoint(_) => vec![g.upsample2()?],
        };
        Ok(grads)
    }

    pub fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Affine { .. } => "affine",
            Square(_) => "square",
            Relu(_) => "relu",
            Tanh(_) => "tanh",
            Sigmoid(_) => "sigmoid",
            Sum(_) => "sum",
            Mean(_) => "mean",
            MaskedMean { .. } => "masked_mean",
            BroadcastScalar(_) => "broadcast_scalar",
            BroadcastChannel(_) => "broadcast_channel",
            ChannelSum(_) => "channel_sum",
            Reshape(_) => "reshape",
            MatMul(..) => "matmul",
            Transpose(_) => "transpose",
            Conv2d { .. } => "conv2d",
            ConvInputGrad { .. } => "conv2d_input_grad",
            ConvKernelGrad { .. } => "conv2d_kernel_grad",
            GradX(_) => "grad_x",
            GradY(_) => "grad_y",
            Cat { .. } => "cat",
            Narrow { .. } => "narrow",
            PadAxis { .. } => "pad_axis",
            AvgPool2(_) => "avg_pool2",
            AvgPool2Adjoint(_) => "avg_pool2_adjoint",
            Upsample2(_) => "upsample2",
            Upsample2Adjoint(_) => "upsample2_adjoint",
        }
    }
}
