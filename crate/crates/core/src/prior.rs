//! The learned prior `Φ` and the variational cost it defines.
//!
//! `Φ(x) = x + out(fine(x) + up(coarse(pool(x))))`, where each path is an
//! input convolution followed by residual bilinear units.

use autograd::{Conv2dSpec, PaddingMode, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Conv, Init, ParamStore};

/// Anything usable as a prior operator on `[B, C, H, W]` states.
pub trait Prior {
    fn apply(&self, x: &Tensor) -> Result<Tensor>;
}

/// Wraps a closure as a [`Prior`].
pub struct FnPrior<F>(pub F);

impl<F: Fn(&Tensor) -> Result<Tensor>> Prior for FnPrior<F> {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        (self.0)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Circular,
    Zero,
}

impl Padding {
    pub fn spec(self, k: usize) -> Conv2dSpec {
        let mode = match self {
            Padding::Circular => PaddingMode::Circular,
            Padding::Zero => PaddingMode::Zero,
        };
        Conv2dSpec::same(k).with_mode(mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Feature channels inside each path.
    pub hidden: usize,
    /// Channels of each bilinear branch.
    pub bilinear: usize,
    pub kernel: usize,
    /// Residual units per path.
    pub blocks: usize,
    pub padding: Padding,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { hidden: 16, bilinear: 8, kernel: 3, blocks: 2, padding: Padding::Circular }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("prior kernel must be odd, got {}", self.kernel)));
        }
        if self.hidden == 0 || self.bilinear == 0 {
            return Err(Error::Config("prior widths must be positive".into()));
        }
        Ok(())
    }

    /// Number of scalar parameters for a state with `channels` channels.
    pub fn param_count(&self, channels: usize) -> usize {
        let (h, m, k) = (self.hidden, self.bilinear, self.kernel);
        let unit = Conv::param_count(h, 2 * m, k, true) + Conv::param_count(h, m, k, true) + Conv::param_count(2 * m, h, 1, true);
        let path = Conv::param_count(channels, h, k, true) + self.blocks * unit;
        2 * path + Conv::param_count(h, channels, 1, true)
    }
}

/// `z + mix(cat(a₁, a₂ ⊙ relu(b)))` with `a = conv_a(z)` linear and `b = conv_b(z)`.
#[derive(Debug, Clone, Copy)]
struct BilinearUnit {
    linear: Conv,
    gated: Conv,
    mix: Conv,
    m: usize,
}

impl BilinearUnit {
    fn forward(&self, p: &ParamStore, z: &Tensor) -> Result<Tensor> {
        let a = self.linear.forward(p, z)?;
        let b = self.gated.forward(p, z)?.relu();
        let prod = a.narrow(1, self.m, self.m)?.mul(&b)?;
        let u = Tensor::cat(&[a.narrow(1, 0, self.m)?, prod], 1)?;
        Ok(z.add(&self.mix.forward(p, &u)?)?)
    }
}

#[derive(Debug, Clone)]
struct Path {
    input: Conv,
    units: Vec<BilinearUnit>,
}

impl Path {
    fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut z = self.input.forward(p, x)?;
        for u in &self.units {
            z = u.forward(p, &z)?;
        }
        Ok(z)
    }
}

/// Two-scale residual CNN prior.
#[derive(Debug, Clone)]
pub struct NeuralPrior {
    pub config: PriorConfig,
    pub channels: usize,
    pub params: ParamStore,
    fine: Path,
    coarse: Path,
    out: Conv,
}

impl NeuralPrior {
    /// Random weights, except the output layer which starts at zero so the
    /// untrained prior is the identity.
    pub fn new<R: Rng>(config: &PriorConfig, channels: usize, rng: &mut R) -> Result<Self> {
        Self::build(config, channels, rng, Init::FanIn, Init::Zero)
    }

    /// All weights zero: `Φ` is the identity.
    pub fn zeros(config: &PriorConfig, channels: usize) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Self::build(config, channels, &mut rng, Init::Zero, Init::Zero)
    }

    fn build<R: Rng>(config: &PriorConfig, channels: usize, rng: &mut R, init: Init, out_init: Init) -> Result<Self> {
        config.validate()?;
        let (h, m, k) = (config.hidden, config.bilinear, config.kernel);
        let spec = config.padding.spec(k);
        let mut params = ParamStore::default();
        let path = |params: &mut ParamStore, name: &str, rng: &mut R| {
            let input = Conv::new(params, &format!("{name}.input"), channels, h, k, true, spec, init, rng);
            let units = (0..config.blocks)
                .map(|b| {
                    let n = format!("{name}.unit{b}");
                    BilinearUnit {
                        linear: Conv::new(params, &format!("{n}.linear"), h, 2 * m, k, true, spec, init, rng),
                        gated: Conv::new(params, &format!("{n}.gated"), h, m, k, true, spec, init, rng),
                        mix: Conv::new(params, &format!("{n}.mix"), 2 * m, h, 1, true, Conv2dSpec::same(1), init, rng),
                        m,
                    }
                })
                .collect();
            Path { input, units }
        };
        let fine = path(&mut params, "fine", rng);
        let coarse = path(&mut params, "coarse", rng);
        let out = Conv::new(&mut params, "out", h, channels, 1, true, Conv2dSpec::same(1), out_init, rng);
        Ok(Self { config: config.clone(), channels, params, fine, coarse, out })
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }
}

impl Prior for NeuralPrior {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.channels {
            return Err(Error::shape("phi_apply", format!("input {s:?}, prior expects {} channels", self.channels)));
        }
        if s[2] % 2 != 0 || s[3] % 2 != 0 {
            return Err(Error::shape("phi_apply", format!("spatial extent {}x{} must be even", s[2], s[3])));
        }
        let p = &self.params;
        let fine = self.fine.forward(p, x)?;
        let coarse = self.coarse.forward(p, &x.avg_pool2()?)?.upsample2()?;
        Ok(x.add(&self.out.forward(p, &fine.add(&coarse)?)?)?)
    }
}

/// `λ₁` weights the observation misfit, `λ₂` the prior misfit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub lambda_obs: f64,
    pub lambda_prior: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { lambda_obs: 1.0, lambda_prior: 1.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_obs < 0.0 || self.lambda_prior < 0.0 || !(self.lambda_obs + self.lambda_prior > 0.0) {
            return Err(Error::Config(format!("cost weights must be nonnegative and not both zero: {self:?}")));
        }
        Ok(())
    }
}

/// Observations of one batch, prepared once and reused by every cost
/// evaluation of a solve.
#[derive(Debug, Clone)]
pub struct CostContext {
    pub obs: Tensor,
    pub mask: Tensor,
    /// Per-sample `mask / count`, zero for samples without observations.
    obs_weight: Tensor,
    pub weights: CostWeights,
}

impl CostContext {
    pub fn new(obs: Tensor, mask: Tensor, weights: CostWeights) -> Result<Self> {
        weights.validate()?;
        if obs.shape() != mask.shape() || obs.rank() < 2 {
            return Err(Error::shape("variational_cost", format!("obs {:?} vs mask {:?}", obs.shape(), mask.shape())));
        }
        let b = obs.shape()[0];
        let per = obs.numel() / b;
        let mut w = mask.to_vec();
        let mut any = false;
        for chunk in w.chunks_mut(per) {
            let count = chunk.iter().filter(|&&v| v != 0.0).count();
            if count > 0 {
                any = true;
                let inv = 1.0 / count as f64;
                chunk.iter_mut().for_each(|v| *v = if *v != 0.0 { inv } else { 0.0 });
            }
        }
        if !any && weights.lambda_prior == 0.0 {
            return Err(Error::Invalid("empty observation mask with zero prior weight gives a degenerate cost".into()));
        }
        let obs_weight = Tensor::new(w, obs.shape())?;
        Ok(Self { obs: obs.detach(), mask: mask.detach(), obs_weight, weights })
    }

    /// Batch sum of `λ₁·maskedMean((y − x)², Ω) + λ₂·mean((x − Φx)²)` over samples.
    pub fn cost(&self, x: &Tensor, prior: &dyn Prior) -> Result<Tensor> {
        if x.shape() != self.obs.shape() {
            return Err(Error::shape("variational_cost", format!("state {:?} vs obs {:?}", x.shape(), self.obs.shape())));
        }
        let per = (x.numel() / x.shape()[0]) as f64;
        let mut total: Option<Tensor> = None;
        if self.weights.lambda_obs > 0.0 {
            let obs = self.obs.sub(x)?.square().mul(&self.obs_weight)?.sum().scale(self.weights.lambda_obs);
            total = Some(obs);
        }
        if self.weights.lambda_prior > 0.0 {
            let r = x.sub(&prior.apply(x)?)?.square().sum().scale(self.weights.lambda_prior / per);
            total = Some(match total {
                Some(t) => t.add(&r)?,
                None => r,
            });
        }
        Ok(total.expect("weights validated"))
    }
}

/// Single-call form of [`CostContext::cost`].
pub fn variational_cost(x: &Tensor, obs: &Tensor, mask: &Tensor, weights: CostWeights, prior: &dyn Prior) -> Result<Tensor> {
    CostContext::new(obs.clone(), mask.clone(), weights)?.cost(x, prior)
}
