//! Catalogue of small random graphs exercising every op, with the checks that
//! compare reverse-mode first and second derivatives against central
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::grad;
use crate::check::{finite_diff_gradient, max_rel_error};
use crate::conv::{Conv2dSpec, PaddingMode};
use crate::error::Result;
use crate::tensor::Tensor;

type GraphFn = Box<dyn Fn(&Tensor) -> Result<Tensor>>;

/// A scalar-valued graph of one tensor input.
pub struct GraphCase {
    pub name: String,
    /// Op kinds the graph is built from.
    pub ops: Vec<&'static str>,
    pub input: Tensor,
    build: GraphFn,
}

impl GraphCase {
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        (self.build)(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub first_order: f64,
    pub second_order: f64,
}

/// Entries uniform in [-1, 1], kept away from the ReLU kink at 0.
fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(data, shape).expect("valid shape")
}

fn mask(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
    Tensor::new(data, shape).expect("valid shape")
}

fn case(name: &str, ops: &[&'static str], input: Tensor, build: impl Fn(&Tensor) -> Result<Tensor> + 'static) -> GraphCase {
    GraphCase {
        name: name.to_string(),
        ops: ops.to_vec(),
        input,
        build: Box::new(build),
    }
}

/// Smooth scalar read-out so second derivatives are nonzero.
fn readout(t: &Tensor, weights: &Tensor) -> Result<Tensor> {
    Ok(t.tanh().mul(weights)?.sum())
}

/// Builds the fixed catalogue (one graph per op family) plus `extra` random
/// five-op chains, all drawn from `seed`.
pub fn random_cases(seed: u64, extra: usize) -> Vec<GraphCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut cases = Vec::new();

    let s4 = [2, 3, 6, 6];
    {
        let (c, w) = (uniform(r, &s4), uniform(r, &s4));
        cases.push(case("add", &["add", "tanh", "mul", "sum"], uniform(r, &s4), move |x| readout(&x.add(&c)?, &w)));
    }
    {
        let (c, w) = (uniform(r, &s4), uniform(r, &s4));
        cases.push(case("sub_square", &["sub", "square", "mul", "sum"], uniform(r, &s4), move |x| {
            Ok(x.sub(&c)?.square().mul(&w)?.sum())
        }));
    }
    {
        let w = uniform(r, &s4);
        cases.push(case("mul_self", &["mul", "sum"], uniform(r, &s4), move |x| Ok(x.mul(x)?.mul(&w)?.sum())));
    }
    {
        let w = uniform(r, &[5]);
        cases.push(case("affine_neg", &["affine", "tanh"], uniform(r, &[5]), move |x| {
            readout(&x.affine(1.7, -0.3).neg(), &w)
        }));
    }
    {
        let (b, w) = (uniform(r, &[4, 2]), uniform(r, &[3, 2]));
        cases.push(case("matmul", &["matmul", "tanh"], uniform(r, &[3, 4]), move |x| readout(&x.matmul(&b)?, &w)));
    }
    {
        let (b, w) = (uniform(r, &[3, 2]), uniform(r, &[4, 2]));
        cases.push(case("transpose_matmul", &["transpose", "matmul", "square"], uniform(r, &[3, 4]), move |x| {
            Ok(x.transpose()?.matmul(&b)?.square().mul(&w)?.sum())
        }));
    }
    {
        let (k, w) = (uniform(r, &[4, 3, 3, 3]), uniform(r, &[2, 4, 6, 6]));
        cases.push(case("conv2d_circular", &["conv2d", "tanh"], uniform(r, &s4), move |x| {
            readout(&x.conv2d(&k, Conv2dSpec::same(3))?, &w)
        }));
    }
    {
        let spec = Conv2dSpec::same(3).with_mode(PaddingMode::Zero).with_stride(2);
        let (k, w) = (uniform(r, &[2, 3, 3, 3]), uniform(r, &[2, 2, 3, 3]));
        cases.push(case("conv2d_zero_stride2", &["conv2d", "tanh"], uniform(r, &s4), move |x| {
            readout(&x.conv2d(&k, spec)?, &w)
        }));
    }
    {
        let (inp, w) = (uniform(r, &s4), uniform(r, &[2, 4, 6, 6]));
        cases.push(case("conv2d_kernel_input", &["conv2d", "tanh"], uniform(r, &[4, 3, 3, 3]), move |k| {
            readout(&inp.conv2d(k, Conv2dSpec::same(3))?, &w)
        }));
    }
    {
        let (k, w) = (uniform(r, &[4, 3, 1, 1]), uniform(r, &[2, 4, 6, 6]));
        cases.push(case("conv2d_pointwise", &["conv2d", "sigmoid"], uniform(r, &s4), move |x| {
            Ok(x.conv2d(&k, Conv2dSpec::same(1))?.sigmoid().mul(&w)?.sum())
        }));
    }
    {
        let (k, w) = (uniform(r, &[4, 3, 3, 3]), uniform(r, &s4));
        cases.push(case("conv2d_input_grad", &["conv2d_input_grad", "tanh"], uniform(r, &[2, 4, 6, 6]), move |g| {
            readout(&g.conv2d_input_grad(&k, Conv2dSpec::same(3), (6, 6))?, &w)
        }));
    }
    {
        let (inp, w) = (uniform(r, &s4), uniform(r, &[4, 3, 3, 3]));
        cases.push(case("conv2d_kernel_grad", &["conv2d_kernel_grad", "tanh"], uniform(r, &[2, 4, 6, 6]), move |g| {
            readout(&inp.conv2d_kernel_grad(g, Conv2dSpec::same(3), 3)?, &w)
        }));
    }
    {
        let w = uniform(r, &s4);
        cases.push(case("relu", &["relu", "square", "mul", "add"], uniform(r, &s4), move |x| {
            Ok(x.relu().mul(&w)?.add(&x.square())?.sum())
        }));
    }
    {
        let w = uniform(r, &s4);
        cases.push(case("tanh_sigmoid", &["tanh", "sigmoid", "mul"], uniform(r, &s4), move |x| {
            Ok(x.tanh().mul(&x.sigmoid())?.mul(&w)?.sum())
        }));
    }
    cases.push(case("sum_mean", &["sum", "mean", "square"], uniform(r, &[7]), move |x| {
        Ok(x.sum().square().add(&x.tanh().mean())?)
    }));
    {
        let m = mask(r, &s4);
        cases.push(case("masked_mean", &["masked_mean", "tanh", "square"], uniform(r, &s4), move |x| {
            Ok(x.tanh().masked_mean(&m)?.square())
        }));
    }
    {
        let w = uniform(r, &s4);
        cases.push(case("spatial_gradient", &["grad_x", "grad_y", "square"], uniform(r, &s4), move |x| {
            Ok(x.grad_x()?.square().add(&x.grad_y()?.tanh().mul(&w)?)?.sum())
        }));
    }
    {
        let w = uniform(r, &[2, 4, 6, 6]);
        cases.push(case("cat_narrow", &["cat", "narrow", "tanh"], uniform(r, &s4), move |x| {
            let joined = Tensor::cat(&[x.clone(), x.tanh()], 1)?;
            readout(&joined.narrow(1, 1, 4)?, &w)
        }));
    }
    {
        let w = uniform(r, &[2, 5, 6, 6]);
        cases.push(case("pad_axis", &["pad_axis", "sigmoid"], uniform(r, &s4), move |x| {
            Ok(x.pad_axis(1, 1, 5)?.sigmoid().mul(&w)?.sum())
        }));
    }
    {
        let w = uniform(r, &s4);
        cases.push(case("pool_upsample", &["avg_pool2", "upsample2", "tanh"], uniform(r, &s4), move |x| {
            readout(&x.avg_pool2()?.tanh().upsample2()?, &w)
        }));
    }
    {
        let w = uniform(r, &[2, 3, 3, 3]);
        cases.push(case("pool_adjoints", &["upsample2_adjoint", "avg_pool2_adjoint", "avg_pool2", "tanh"], uniform(r, &s4), move |x| {
            let coarse = x.tanh().upsample2_adjoint()?;
            readout(&coarse.avg_pool2_adjoint()?.square().avg_pool2()?, &w)
        }));
    }
    {
        let (base, w) = (uniform(r, &s4), uniform(r, &s4));
        cases.push(case("channel_bias", &["broadcast_channel", "channel_sum", "tanh"], uniform(r, &[3]), move |b| {
            let y = base.add_channel_bias(b)?;
            Ok(readout(&y, &w)?.add(&y.tanh().channel_sum()?.square().sum())?)
        }));
    }
    {
        let w = uniform(r, &[6, 2]);
        cases.push(case("reshape_broadcast", &["reshape", "broadcast_scalar", "mul"], uniform(r, &[3, 4]), move |x| {
            let s = x.square().mean().broadcast_scalar(&[6, 2])?;
            readout(&x.reshape(&[6, 2])?.mul(&s)?, &w)
        }));
    }

    for i in 0..extra {
        cases.push(random_chain(r, i));
    }
    cases
}

/// Five randomly drawn ops applied in sequence to a `[2, 2, 4, 4]` input.
fn random_chain(rng: &mut ChaCha8Rng, index: usize) -> GraphCase {
    const KINDS: [&str; 10] = [
        "add", "mul", "tanh", "sigmoid", "square", "conv2d", "grad_x", "grad_y", "pool_upsample", "affine",
    ];
    let shape = [2, 2, 4, 4];
    let picks: Vec<&'static str> = (0..5).map(|_| KINDS[rng.random_range(0..KINDS.len())]).collect();
    let consts: Vec<Tensor> = picks
        .iter()
        .map(|k| match *k {
            "conv2d" => uniform(rng, &[2, 2, 3, 3]),
            _ => uniform(rng, &shape),
        })
        .collect();
    let w = uniform(rng, &shape);
    let ops = picks.clone();
    let input = uniform(rng, &shape);
    case(&format!("chain_{index}"), &ops, input, move |x| {
        let mut y = x.clone();
        for (k, c) in picks.iter().zip(&consts) {
            y = match *k {
                "add" => y.add(c)?,
                "mul" => y.mul(c)?,
                "tanh" => y.tanh(),
                "sigmoid" => y.sigmoid(),
                "square" => y.square().scale(0.5),
                "conv2d" => y.conv2d(c, Conv2dSpec::same(3))?.scale(0.3),
                "grad_x" => y.grad_x()?.add(&y)?,
                "grad_y" => y.grad_y()?.add(&y)?,
                "pool_upsample" => y.avg_pool2()?.upsample2()?.add(&y)?,
                _ => y.affine(0.8, 0.1),
            };
        }
        readout(&y, &w)
    })
}

/// Compares reverse-mode first and second derivatives with central
/// differences. Second derivatives are probed along a random direction `v`
/// through `∇ₓ⟨∇ₓf, v⟩`.
pub fn check_case(case: &GraphCase, step: f64, seed: u64) -> Result<CheckReport> {
    let x = case.input.to_var();
    let g = grad(&case.eval(&x)?, &[&x], true)?.remove(0);
    let fd1 = finite_diff_gradient(|z| case.eval(z)?.item(), &case.input, step)?;
    let first_order = max_rel_error(g.data(), fd1.data(), 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = uniform(&mut rng, case.input.shape());
    let hvp = grad(&g.mul(&v)?.sum(), &[&x], false)?.remove(0);
    let fd2 = finite_diff_gradient(
        |z| {
            let zv = z.to_var();
            let gz = grad(&case.eval(&zv)?, &[&zv], false)?.remove(0);
            gz.mul(&v)?.sum().item()
        },
        &case.input,
        step,
    )?;
    let second_order = max_rel_error(hvp.data(), fd2.data(), 1e-8);
    Ok(CheckReport { first_order, second_order })
}
