//! Iterative solvers of the variational cost: the learned conv-LSTM gradient
//! solver and the parameter-free fixed-point scheme.

use autograd::{grad, Conv2dSpec, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Conv, Init, ParamStore};
use crate::prior::{CostContext, Padding, Prior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub hidden: usize,
    pub kernel: usize,
    pub n_iter: usize,
    pub padding: Padding,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { hidden: 32, kernel: 3, n_iter: 5, padding: Padding::Circular }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("solver needs an odd kernel and positive width: {self:?}")));
        }
        if self.n_iter == 0 {
            return Err(Error::Config("solver n_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn param_count(&self, channels: usize) -> usize {
        Conv::param_count(channels + self.hidden, 4 * self.hidden, self.kernel, true)
            + Conv::param_count(self.hidden, channels, 1, false)
    }
}

/// Conv-LSTM over `cat(α·∇ₓJ, h)` followed by the linear map `T`.
#[derive(Debug, Clone)]
pub struct GradSolver {
    pub config: SolverConfig,
    pub channels: usize,
    pub params: ParamStore,
    gates: Conv,
    out: Conv,
}

/// Recurrent memory of one solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub h: Tensor,
    pub c: Tensor,
    pub iteration: usize,
}

impl SolverState {
    pub fn zeros(batch: usize, hidden: usize, height: usize, width: usize) -> Result<Self> {
        let z = Tensor::zeros(&[batch, hidden, height, width])?;
        Ok(Self { h: z.clone(), c: z, iteration: 0 })
    }
}

/// Whether the unrolled solve must stay differentiable in the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: Tensor,
    /// Cost at each iterate before its update.
    pub trace: Vec<f64>,
}

impl GradSolver {
    pub fn new<R: Rng>(config: &SolverConfig, channels: usize, rng: &mut R) -> Result<Self> {
        Self::build(config, channels, rng, Init::FanIn)
    }

    /// All weights zero: every step leaves the state unchanged.
    pub fn zeros(config: &SolverConfig, channels: usize) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Self::build(config, channels, &mut rng, Init::Zero)
    }

    fn build<R: Rng>(config: &SolverConfig, channels: usize, rng: &mut R, init: Init) -> Result<Self> {
        config.validate()?;
        let hd = config.hidden;
        let mut params = ParamStore::default();
        let spec = config.padding.spec(config.kernel);
        let gates = Conv::new(&mut params, "gates", channels + hd, 4 * hd, config.kernel, true, spec, init, rng);
        let out = Conv::new(&mut params, "out", hd, channels, 1, false, Conv2dSpec::same(1), init, rng);
        Ok(Self { config: config.clone(), channels, params, gates, out })
    }

    /// Gradient normalization: the per-sample element count, which turns the
    /// gradient of a mean-normalized cost back into per-cell units.
    pub fn alpha(x: &Tensor) -> f64 {
        (x.numel() / x.shape()[0]) as f64
    }

    /// One update `x ← x − T(h')` with `(h', c') = LSTM(α·grad, h, c)`.
    pub fn grad_step(&self, x: &Tensor, grad: &Tensor, s: &SolverState) -> Result<(Tensor, SolverState)> {
        if x.shape() != grad.shape() || x.shape().get(1) != Some(&self.channels) {
            return Err(Error::shape("grad_step", format!("state {:?}, gradient {:?}", x.shape(), grad.shape())));
        }
        let hd = self.config.hidden;
        let inp = Tensor::cat(&[grad.scale(Self::alpha(x)), s.h.clone()], 1)?;
        let z = self.gates.forward(&self.params, &inp)?;
        let i = z.narrow(1, 0, hd)?.sigmoid();
        let f = z.narrow(1, hd, hd)?.sigmoid();
        let o = z.narrow(1, 2 * hd, hd)?.sigmoid();
        let g = z.narrow(1, 3 * hd, hd)?.tanh();
        let c = f.mul(&s.c)?.add(&i.mul(&g)?)?;
        let h = o.mul(&c.tanh())?;
        let x_next = x.sub(&self.out.forward(&self.params, &h)?)?;
        Ok((x_next, SolverState { h, c, iteration: s.iteration + 1 }))
    }

    /// Runs `n_iter` steps from `x0` with fresh recurrent memory.
    pub fn solve(&self, x0: &Tensor, ctx: &CostContext, prior: &dyn Prior, n_iter: usize, mode: Mode) -> Result<SolveOutput> {
        if n_iter == 0 {
            return Err(Error::Invalid("solve needs n_iter >= 1".into()));
        }
        let s = x0.shape();
        let mut state = SolverState::zeros(s[0], self.config.hidden, s[2], s[3])?;
        let mut x = x0.detach().to_var();
        let mut trace = Vec::with_capacity(n_iter);
        for it in 0..n_iter {
            if mode == Mode::Infer {
                x = x.detach().to_var();
                state.h = state.h.detach();
                state.c = state.c.detach();
            }
            let cost = ctx.cost(&x, prior)?;
            let value = cost.item()?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite cost at solver iteration {it}")));
            }
            trace.push(value);
            let g = grad(&cost, &[&x], mode == Mode::Train)?.remove(0);
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at solver iteration {it}")));
            }
            let (next, st) = self.grad_step(&x, &g, &state)?;
            x = next;
            state = st;
        }
        if mode == Mode::Infer {
            x = x.detach();
        }
        Ok(SolveOutput { x, trace })
    }
}

/// Alternates `x ← Φ(x)` with re-imposing observed components.
///
/// `obs` and `mask` are in the same layout as `x0`; mask entries are 0 or 1.
/// Observed entries equal `obs` exactly after every iteration.
pub fn fixed_point_solve(x0: &Tensor, obs: &Tensor, mask: &Tensor, prior: &dyn Prior, n_fp: usize) -> Result<Tensor> {
    fixed_point_solve_with(x0, obs, mask, prior, n_fp, |_, _| {})
}

/// [`fixed_point_solve`] calling `inspect(k, x)` after iteration `k`.
pub fn fixed_point_solve_with(
    x0: &Tensor,
    obs: &Tensor,
    mask: &Tensor,
    prior: &dyn Prior,
    n_fp: usize,
    mut inspect: impl FnMut(usize, &Tensor),
) -> Result<Tensor> {
    if n_fp == 0 {
        return Err(Error::Invalid("fixed-point solve needs n_fp >= 1".into()));
    }
    if x0.shape() != obs.shape() || obs.shape() != mask.shape() {
        return Err(Error::shape("fixed_point_solve", format!("{:?}, {:?}, {:?}", x0.shape(), obs.shape(), mask.shape())));
    }
    let mut x = x0.detach();
    for k in 0..n_fp {
        let mut data = prior.apply(&x)?.to_vec();
        for ((v, &y), &m) in data.iter_mut().zip(obs.data()).zip(mask.data()) {
            if m != 0.0 {
                *v = y;
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite fixed-point iterate {k}")));
        }
        x = Tensor::new(data, x0.shape())?;
        inspect(k, &x);
    }
    Ok(x)
}
