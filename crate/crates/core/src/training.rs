//! Supervised training of prior and solver through the unrolled solve.

use std::ops::Range;

use autograd::{grad, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{psd_resolved_scales, rmse_score_series};
use crate::field::{FieldSeq, ObsSet};
use crate::model::{Method, Model, ModelConfig, Window};
use crate::prior::Prior;
use crate::solver::Mode;
use crate::state::reconstruct_tensor;

/// Weights of the four loss terms and of the frames of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Reconstruction, gradient, prior-on-estimate and prior-on-truth terms.
    pub lambda: [f64; 4],
    pub frame_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: [1.0, 1.0, 0.1, 0.1], frame_weights: vec![0.0, 0.25, 0.75, 1.0, 0.75, 0.25, 0.0] }
    }
}

impl LossConfig {
    pub fn validate(&self, n_frames: usize) -> Result<()> {
        if self.frame_weights.len() != n_frames {
            return Err(Error::Config(format!(
                "{} frame weights for windows of {n_frames} frames",
                self.frame_weights.len()
            )));
        }
        if self.frame_weights.iter().chain(&self.lambda).any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed of the initial weights.
    pub init_seed: u64,
    /// Seed of the patch order.
    pub shuffle_seed: u64,
    /// `[frames, rows, cols]`; frames must equal the window length.
    pub patch: [usize; 3],
    /// Defaults to half the patch extent on each axis.
    pub stride: Option<[usize; 3]>,
    /// Windows per batch at validation time.
    pub eval_batch: usize,
    /// Applies a random exact symmetry of the problem (flips, transposes,
    /// sign and time reversal) to every training patch.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            learning_rate: 1e-3,
            batch_size: 2,
            epochs: 30,
            init_seed: 0,
            shuffle_seed: 1,
            patch: [7, 32, 32],
            stride: None,
            eval_batch: 4,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn strides(&self) -> [usize; 3] {
        self.stride.unwrap_or([(self.patch[0] / 2).max(1), (self.patch[1] / 2).max(1), (self.patch[2] / 2).max(1)])
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        self.loss.validate(model.n_frames)?;
        if self.patch[0] != model.n_frames {
            return Err(Error::Config(format!("patch spans {} frames, window has {}", self.patch[0], model.n_frames)));
        }
        if self.patch[1] % 2 != 0 || self.patch[2] % 2 != 0 || self.patch[1] == 0 || self.patch[2] == 0 {
            return Err(Error::Config(format!("patch extents must be even, got {:?}", self.patch)));
        }
        if self.strides().contains(&0) || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(Error::Config("strides and batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Values of the four loss terms.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Tensor,
    pub terms: [f64; 4],
}

/// Constant `[B, C, H, W]` tensor of `frame_weights[c % n] / (B·groups·H·W)`.
fn frame_weight_tensor(shape: &[usize], weights: &[f64], groups: usize) -> Result<Tensor> {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let n = weights.len();
    let norm = 1.0 / (b * groups * h * w) as f64;
    let mut data = Vec::with_capacity(b * c * h * w);
    for _ in 0..b {
        for ch in 0..c {
            data.extend(std::iter::repeat_n(weights[ch % n] * norm, h * w));
        }
    }
    Ok(Tensor::new(data, shape)?)
}

/// `λ₁ Σ wᵢ‖x̂ − x‖² + λ₂ Σ wᵢ‖∇x̂ − ∇x‖² + λ₃ Σ wᵢ‖x̃ − Φ(x̂)‖² + λ₄ Σ wᵢ‖x̃ − Φ(x̃)‖²`
/// with frame-wise mean squares. `x_true` is `[B, N, H, W]`; `true_aug` and
/// `x_hat` are augmented `[B, 3N, H, W]` states and reconstruction happens
/// inside.
pub fn training_loss(x_true: &Tensor, true_aug: &Tensor, x_hat: &Tensor, prior: &dyn Prior, cfg: &LossConfig) -> Result<LossTerms> {
    let n = cfg.frame_weights.len();
    if x_true.rank() != 4 || x_true.shape()[1] != n || x_hat.shape() != true_aug.shape() || x_hat.shape()[1] != 3 * n {
        return Err(Error::shape(
            "training_loss",
            format!("truth {:?}, augmented truth {:?}, estimate {:?}", x_true.shape(), true_aug.shape(), x_hat.shape()),
        ));
    }
    let [l1, l2, l3, l4] = cfg.lambda;
    let wf = frame_weight_tensor(x_true.shape(), &cfg.frame_weights, 1)?;
    let wa = frame_weight_tensor(x_hat.shape(), &cfg.frame_weights, 3)?;
    let mut terms = [0.0; 4];
    let mut parts = Vec::new();
    let rec = reconstruct_tensor(x_hat)?;
    if l1 > 0.0 {
        let t = rec.sub(x_true)?.square().mul(&wf)?.sum();
        terms[0] = t.item()?;
        parts.push(t.scale(l1));
    }
    if l2 > 0.0 {
        let gx = rec.grad_x()?.sub(&x_true.grad_x()?)?.square();
        let gy = rec.grad_y()?.sub(&x_true.grad_y()?)?.square();
        let t = gx.add(&gy)?.mul(&wf)?.sum();
        terms[1] = t.item()?;
        parts.push(t.scale(l2));
    }
    if l3 > 0.0 {
        let t = true_aug.sub(&prior.apply(x_hat)?)?.square().mul(&wa)?.sum();
        terms[2] = t.item()?;
        parts.push(t.scale(l3));
    }
    if l4 > 0.0 {
        let t = true_aug.sub(&prior.apply(true_aug)?)?.square().mul(&wa)?.sum();
        terms[3] = t.item()?;
        parts.push(t.scale(l4));
    }
    let mut total = match parts.pop() {
        Some(t) => t,
        None => Tensor::scalar(0.0),
    };
    for p in parts {
        total = total.add(&p)?;
    }
    Ok(LossTerms { total, terms })
}

/// Origin of a training patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchIndex {
    pub t: usize,
    pub row: usize,
    pub col: usize,
}

/// `0, s, 2s, ...` up to `len - patch`.
pub fn stride_origins(len: usize, patch: usize, stride: usize) -> Result<Vec<usize>> {
    if patch > len {
        return Err(Error::Config(format!("patch of {patch} exceeds extent {len}")));
    }
    if stride == 0 {
        return Err(Error::Config("patch stride must be positive".into()));
    }
    Ok((0..=len - patch).step_by(stride).collect())
}

/// Every stride-grid patch origin of an extent, in an order shuffled by
/// `seed`.
pub fn sample_patches(extent: [usize; 3], patch: [usize; 3], stride: [usize; 3], seed: u64) -> Result<Vec<PatchIndex>> {
    let ts = stride_origins(extent[0], patch[0], stride[0])?;
    let rs = stride_origins(extent[1], patch[1], stride[1])?;
    let cs = stride_origins(extent[2], patch[2], stride[2])?;
    let mut out = Vec::with_capacity(ts.len() * rs.len() * cs.len());
    for &t in &ts {
        for &row in &rs {
            for &col in &cs {
                out.push(PatchIndex { t, row, col });
            }
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}

/// Element of the symmetry group used for augmentation; bit 0 transposes
/// (square patches only), bits 1 and 2 flip rows and columns, bit 3 negates
/// and bit 4 reverses time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symmetry(pub u8);

impl Symmetry {
    pub const COUNT: u8 = 32;

    /// Velocity `(rows, cols)` per step of a feature after the map, for
    /// square planes.
    pub fn map_velocity(self, v: [f64; 2]) -> [f64; 2] {
        let mut u = v;
        if self.0 & 2 != 0 {
            u[0] = -u[0];
        }
        if self.0 & 4 != 0 {
            u[1] = -u[1];
        }
        if self.0 & 1 != 0 {
            u.swap(0, 1);
        }
        if self.0 & 16 != 0 {
            u = [-u[0], -u[1]];
        }
        u
    }

    /// Elements that leave a common drift unchanged. A transpose only acts on
    /// square planes, so on other planes elements differing by bit 0 coincide
    /// and only one of each pair is kept.
    pub fn preserving(drift: [f64; 2], square: bool) -> Vec<Symmetry> {
        (0..Self::COUNT)
            .map(Symmetry)
            .filter(|g| square || g.0 & 1 == 0)
            .filter(|g| g.map_velocity(drift) == drift)
            .collect()
    }

    fn map_plane(self, data: &[f64], t: usize, h: usize, w: usize) -> Vec<f64> {
        let transpose = self.0 & 1 != 0 && h == w;
        let mut out = vec![0.0; data.len()];
        for k in 0..t {
            let src_k = if self.0 & 16 != 0 { t - 1 - k } else { k };
            for i in 0..h {
                for j in 0..w {
                    let (mut si, mut sj) = if transpose { (j, i) } else { (i, j) };
                    if self.0 & 2 != 0 {
                        si = h - 1 - si;
                    }
                    if self.0 & 4 != 0 {
                        sj = w - 1 - sj;
                    }
                    out[(k * h + i) * w + j] = data[(src_k * h + si) * w + sj];
                }
            }
        }
        out
    }

    pub fn apply_field(self, f: &FieldSeq) -> FieldSeq {
        let (t, h, w) = f.dims();
        let s = if self.0 & 8 != 0 { -1.0 } else { 1.0 };
        let data = self.map_plane(f.data(), t, h, w).into_iter().map(|v| s * v).collect();
        FieldSeq::new(t, h, w, data, f.grid).expect("same extent")
    }

    pub fn apply_obs(self, o: &ObsSet) -> ObsSet {
        let (t, h, w) = o.dims();
        let m: Vec<f64> = o.mask.iter().map(|&b| b as u8 as f64).collect();
        let mask = self.map_plane(&m, t, h, w).into_iter().map(|v| v != 0.0).collect();
        ObsSet::new(self.apply_field(&o.values), mask).expect("same extent")
    }

    pub fn apply_window(self, win: &Window) -> Window {
        Window {
            obs: self.apply_obs(&win.obs),
            oi: self.apply_field(&win.oi),
            truth: win.truth.as_ref().map(|f| self.apply_field(f)),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Data available to training, with day ranges for each role.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub truth: &'a FieldSeq,
    pub obs: &'a ObsSet,
    pub oi: &'a FieldSeq,
    pub train: Range<usize>,
    pub val: Range<usize>,
    /// Common propagation velocity of the data, cells per frame; augmentation
    /// only uses symmetries that preserve it.
    pub drift: [f64; 2],
}

impl TrainData<'_> {
    pub fn validate(&self) -> Result<()> {
        let t = self.truth.len_t();
        if self.obs.dims() != self.truth.dims() || self.oi.dims() != self.truth.dims() {
            return Err(Error::shape("train_data", "truth, observations and OI differ in shape"));
        }
        if self.train.is_empty() || self.val.is_empty() || self.train.end > t || self.val.end > t {
            return Err(Error::Config(format!("periods {:?} / {:?} must be nonempty within 0..{t}", self.train, self.val)));
        }
        if self.train.start < self.val.end && self.val.start < self.train.end {
            return Err(Error::Config(format!("training days {:?} overlap validation days {:?}", self.train, self.val)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mu_rmse_score: f64,
    pub val_lambda_x: f64,
    pub val_lambda_t: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch of the returned parameters, 0 for the initialization.
    pub best_epoch: usize,
}

fn training_window(data: &TrainData<'_>, p: PatchIndex, patch: [usize; 3]) -> Result<Window> {
    let t0 = data.train.start + p.t;
    let crop = |f: &FieldSeq| Ok::<_, Error>(f.slice_t(t0, patch[0])?.crop(p.row, p.col, patch[1], patch[2]));
    Ok(Window {
        obs: data.obs.slice_t(t0, patch[0])?.crop(p.row, p.col, patch[1], patch[2]),
        oi: crop(data.oi)?,
        truth: Some(crop(data.truth)?),
    })
}

/// Validation μ(RMSE-score) and resolved scales of the window centers.
pub fn validate(model: &Model, data: &TrainData<'_>, batch: usize) -> Result<(f64, f64, f64)> {
    let rec = model.reconstruct(data.obs, data.oi, data.val.clone(), Method::Learned, batch)?;
    let truth = data.truth.slice_t(data.val.start, data.val.len())?;
    let mu = rmse_score_series(&rec, &truth)?.mu;
    let (lx, lt) = match psd_resolved_scales(&rec, &truth) {
        Ok(s) => (s.lambda_x, s.lambda_t),
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok((mu, lx, lt))
}

const AUGMENT_STREAM: u64 = 0x6175_676d;

/// Sub-seed for a named random stream.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9)) ^ (seed >> 29)
}

/// Trains a fresh model and returns the epoch with the best validation score.
pub fn fit(data: &TrainData<'_>, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<FitResult> {
    fit_with(data, model_cfg, cfg, |_| {})
}

/// [`fit`] reporting each epoch as it completes.
pub fn fit_with(
    data: &TrainData<'_>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    data.validate()?;
    cfg.validate(model_cfg)?;
    let mut model = Model::new(model_cfg, cfg.init_seed)?;
    let train_oi = data.oi.slice_t(data.train.start, data.train.len())?;
    model.scale = train_oi.rms().max(1e-12);
    let (_, h, w) = data.truth.dims();
    let extent = [data.train.len(), h, w];
    // Fails early when the patch does not fit.
    sample_patches(extent, cfg.patch, cfg.strides(), 0)?;

    let group = Symmetry::preserving(data.drift, cfg.patch[1] == cfg.patch[2]);
    let mut params = model.flat_params();
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let patches = sample_patches(extent, cfg.patch, cfg.strides(), stream_seed(cfg.shuffle_seed, epoch as u64))?;
        let mut aug_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.shuffle_seed ^ AUGMENT_STREAM, epoch as u64));
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in patches.chunks(cfg.batch_size).enumerate() {
            let mut windows = chunk.iter().map(|&p| training_window(data, p, cfg.patch)).collect::<Result<Vec<_>>>()?;
            if cfg.augment {
                for w in &mut windows {
                    *w = group[aug_rng.random_range(0..group.len())].apply_window(w);
                }
            }
            let (loss, grads) = loss_and_grad(&model, &windows, &cfg.loss)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite training loss at epoch {epoch}, step {step}")));
            }
            adam.step(&mut params, &grads);
            model.set_flat_params(&params)?;
            loss_sum += loss;
            steps += 1;
        }
        let (mu, lx, lt) = validate(&model, data, cfg.eval_batch)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / steps.max(1) as f64,
            val_mu_rmse_score: mu,
            val_lambda_x: lx,
            val_lambda_t: lt,
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(b, _, _)| mu > *b) {
            best = Some((mu, epoch, params.clone()));
        }
    }
    let best_epoch = match best {
        Some((_, e, p)) => {
            model.set_flat_params(&p)?;
            e
        }
        None => 0,
    };
    Ok(FitResult { model, log, best_epoch })
}

/// Loss of a batch and its gradient with respect to every model parameter,
/// in [`Model::flat_params`] order.
pub fn loss_and_grad(model: &Model, windows: &[Window], loss: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let batch = model.batch(windows)?;
    let (Some(truth), Some(true_aug)) = (&batch.truth, &batch.true_aug) else {
        return Err(Error::Invalid("training windows need truth".into()));
    };
    let x_hat = model.solve(&batch, Mode::Train)?;
    let terms = training_loss(truth, true_aug, &x_hat, &model.prior, loss)?;
    let targets: Vec<&Tensor> = model.prior.params.tensors().iter().chain(model.solver.params.tensors()).collect();
    let value = terms.total.item()?;
    if !terms.total.requires_grad() {
        return Ok((value, vec![0.0; model.param_count()]));
    }
    let grads = grad(&terms.total, &targets, false)?;
    Ok((value, grads.iter().flat_map(|g| g.data().iter().copied()).collect()))
}
