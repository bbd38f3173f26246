//! A trained reconstruction scheme: prior, solver and the data scaling they
//! were fitted with, plus sliding-window inference over long sequences.

use std::ops::Range;

use autograd::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSeq, ObsSet};
use crate::prior::{CostContext, CostWeights, NeuralPrior, PriorConfig};
use crate::solver::{fixed_point_solve, GradSolver, Mode, SolverConfig};
use crate::state::{build_augmented_obs, init_state, masks_to_tensor, reconstruct_tensor, states_to_tensor, COMPONENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length `N` in frames; odd.
    pub n_frames: usize,
    pub prior: PriorConfig,
    pub solver: SolverConfig,
    /// Weights of the inner variational cost.
    pub cost: CostWeights,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n_frames: 7, prior: PriorConfig::default(), solver: SolverConfig::default(), cost: CostWeights::default() }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames % 2 == 0 {
            return Err(Error::Config(format!("window length must be odd, got {}", self.n_frames)));
        }
        self.prior.validate()?;
        self.solver.validate()?;
        self.cost.validate()
    }

    pub fn channels(&self) -> usize {
        COMPONENTS * self.n_frames
    }
}

/// How a window is solved at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// The learned gradient solver.
    Learned,
    /// Parameter-free fixed point with the given number of iterations.
    FixedPoint(usize),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub prior: NeuralPrior,
    pub solver: GradSolver,
    /// Fields are divided by this before entering the networks.
    pub scale: f64,
}

/// Inputs of a batch of windows in network units.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x0: Tensor,
    pub ctx: CostContext,
    /// `[B, N, H, W]`, present for training windows.
    pub truth: Option<Tensor>,
    /// Augmented truth `(oi, x − oi, x − oi)`, present for training windows.
    pub true_aug: Option<Tensor>,
}

/// One data-assimilation window.
#[derive(Debug, Clone)]
pub struct Window {
    pub obs: ObsSet,
    pub oi: FieldSeq,
    pub truth: Option<FieldSeq>,
}

impl Window {
    /// Frames `center - N/2 ..= center + N/2` of the full sequences. Frames
    /// outside the data repeat the nearest OI frame with no observations.
    pub fn centered(obs: &ObsSet, oi: &FieldSeq, center: usize, n_frames: usize) -> Result<Self> {
        let (t, h, w) = obs.dims();
        if oi.dims() != (t, h, w) {
            return Err(Error::shape("window", format!("obs {:?} vs oi {:?}", obs.dims(), oi.dims())));
        }
        let half = n_frames / 2;
        let mut o_vals = Vec::with_capacity(n_frames * h * w);
        let mut o_mask = Vec::with_capacity(n_frames * h * w);
        let mut b_vals = Vec::with_capacity(n_frames * h * w);
        for k in 0..n_frames {
            let d = center as isize + k as isize - half as isize;
            if d >= 0 && (d as usize) < t {
                let d = d as usize;
                o_vals.extend_from_slice(obs.values.frame(d));
                o_mask.extend_from_slice(obs.mask_frame(d));
                b_vals.extend_from_slice(oi.frame(d));
            } else {
                let d = d.clamp(0, t as isize - 1) as usize;
                o_vals.extend(std::iter::repeat_n(0.0, h * w));
                o_mask.extend(std::iter::repeat_n(false, h * w));
                b_vals.extend_from_slice(oi.frame(d));
            }
        }
        let grid = oi.grid;
        Ok(Self {
            obs: ObsSet::new(FieldSeq::new(n_frames, h, w, o_vals, grid)?, o_mask)?,
            oi: FieldSeq::new(n_frames, h, w, b_vals, grid)?,
            truth: None,
        })
    }
}

impl Model {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels();
        Ok(Self {
            prior: NeuralPrior::new(&config.prior, c, &mut rng)?,
            solver: GradSolver::new(&config.solver, c, &mut rng)?,
            config: config.clone(),
            scale: 1.0,
        })
    }

    pub fn param_count(&self) -> usize {
        self.prior.param_count() + self.solver.params.numel()
    }

    /// Prior parameters followed by solver parameters, flattened.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.prior.params.flat();
        v.extend(self.solver.params.flat());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let np = self.prior.params.numel();
        if flat.len() != self.param_count() {
            return Err(Error::shape("model", format!("{} values for {} parameters", flat.len(), self.param_count())));
        }
        self.prior.params.set_flat(&flat[..np])?;
        self.solver.params.set_flat(&flat[np..])
    }

    /// Parameter names and shapes, prefixed by module.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self.prior.params.layout().into_iter().map(|(n, s)| (format!("prior.{n}"), s)).collect();
        out.extend(self.solver.params.layout().into_iter().map(|(n, s)| (format!("solver.{n}"), s)));
        out
    }

    /// Tensors of a batch of windows.
    pub fn batch(&self, windows: &[Window]) -> Result<Batch> {
        let Some(first) = windows.first() else {
            return Err(Error::Invalid("empty batch".into()));
        };
        let (t, h, w) = first.obs.dims();
        if t != self.config.n_frames {
            return Err(Error::shape("batch", format!("window of {t} frames, model uses {}", self.config.n_frames)));
        }
        let inv = 1.0 / self.scale;
        let mut x0s = Vec::with_capacity(windows.len());
        let mut ys = Vec::with_capacity(windows.len());
        let mut masks = Vec::with_capacity(windows.len());
        let mut truths = Vec::new();
        let mut augs = Vec::new();
        for win in windows {
            let obs = ObsSet::new(win.obs.values.map(|v| v * inv), win.obs.mask.clone())?;
            let oi = win.oi.map(|v| v * inv);
            let (y, m) = build_augmented_obs(&obs, &oi)?;
            x0s.push(init_state(&y, &m));
            ys.push(y);
            masks.push(m);
            if let Some(truth) = &win.truth {
                let x = truth.map(|v| v * inv);
                let anomaly = x.zip_map(&oi, |a, b| a - b)?;
                augs.push(crate::state::AugmentedState::new(oi.clone(), anomaly.clone(), anomaly)?);
                truths.push(x);
            }
        }
        let x0 = states_to_tensor(&x0s)?;
        let ctx = CostContext::new(states_to_tensor(&ys)?, masks_to_tensor(&masks, t, h, w)?, self.config.cost)?;
        let (truth, true_aug) = if truths.len() == windows.len() {
            let data: Vec<f64> = truths.iter().flat_map(|f| f.data().iter().copied()).collect();
            (Some(Tensor::new(data, &[windows.len(), t, h, w])?), Some(states_to_tensor(&augs)?))
        } else {
            (None, None)
        };
        Ok(Batch { x0, ctx, truth, true_aug })
    }

    /// Solved augmented state of a batch, in network units.
    pub fn solve(&self, batch: &Batch, mode: Mode) -> Result<Tensor> {
        Ok(self.solver.solve(&batch.x0, &batch.ctx, &self.prior, self.config.solver.n_iter, mode)?.x)
    }

    /// Reconstructions of `days`, one window per day keeping its center frame.
    pub fn reconstruct(&self, obs: &ObsSet, oi: &FieldSeq, days: Range<usize>, method: Method, batch_size: usize) -> Result<FieldSeq> {
        let (t, h, w) = obs.dims();
        if days.is_empty() || days.end > t {
            return Err(Error::Invalid(format!("days {days:?} outside 0..{t}")));
        }
        let n = self.config.n_frames;
        let half = n / 2;
        let mut out = Vec::with_capacity(days.len() * h * w);
        let all: Vec<usize> = days.clone().collect();
        for chunk in all.chunks(batch_size.max(1)) {
            let windows = chunk.iter().map(|&d| Window::centered(obs, oi, d, n)).collect::<Result<Vec<_>>>()?;
            let batch = self.batch(&windows)?;
            let x = match method {
                Method::Learned => self.solve(&batch, Mode::Infer)?,
                Method::FixedPoint(iters) => {
                    fixed_point_solve(&batch.x0, &batch.ctx.obs, &batch.ctx.mask, &self.prior, iters)?
                }
            };
            let rec = reconstruct_tensor(&x)?;
            let plane = h * w;
            for b in 0..chunk.len() {
                let base = (b * n + half) * plane;
                out.extend(rec.data()[base..base + plane].iter().map(|v| v * self.scale));
            }
        }
        FieldSeq::new(days.len(), h, w, out, oi.grid)
    }
}
