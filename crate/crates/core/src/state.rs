//! Augmented state `(x̄, dx₁, dx₂)`: large-scale field, observed anomaly and
//! free anomaly. In tensor form a batch of windows is `[B, 3N, H, W]` with
//! channel `c * N + k` holding component `c` of frame `k`.

use autograd::Tensor;

use crate::error::{Error, Result};
use crate::field::{FieldSeq, Grid, ObsSet};

pub const COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub xbar: FieldSeq,
    pub dx1: FieldSeq,
    pub dx2: FieldSeq,
}

/// Masks of the three components: all observed, `Ω`, none.
#[derive(Debug, Clone, PartialEq)]
pub struct AugMask {
    pub xbar: Vec<bool>,
    pub dx1: Vec<bool>,
    pub dx2: Vec<bool>,
}

impl AugmentedState {
    pub fn new(xbar: FieldSeq, dx1: FieldSeq, dx2: FieldSeq) -> Result<Self> {
        if !xbar.same_shape(&dx1) || !xbar.same_shape(&dx2) {
            return Err(Error::shape(
                "augmented_state",
                format!("{:?}, {:?}, {:?}", xbar.dims(), dx1.dims(), dx2.dims()),
            ));
        }
        Ok(Self { xbar, dx1, dx2 })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.xbar.dims()
    }

    pub fn components(&self) -> [&FieldSeq; COMPONENTS] {
        [&self.xbar, &self.dx1, &self.dx2]
    }
}

impl AugMask {
    pub fn components(&self) -> [&[bool]; COMPONENTS] {
        [&self.xbar, &self.dx1, &self.dx2]
    }
}

/// Observations in augmented form: the OI field (fully observed), the
/// anomaly `y - oi` on `Ω`, and an unobserved third component.
pub fn build_augmented_obs(y: &ObsSet, oi_field: &FieldSeq) -> Result<(AugmentedState, AugMask)> {
    if y.dims() != oi_field.dims() {
        return Err(Error::shape("build_augmented_obs", format!("obs {:?} vs oi {:?}", y.dims(), oi_field.dims())));
    }
    let (t, h, w) = y.dims();
    let n = t * h * w;
    let mut anomaly = y.values.clone();
    for ((a, &o), &m) in anomaly.data_mut().iter_mut().zip(oi_field.data()).zip(&y.mask) {
        *a = if m { *a - o } else { 0.0 };
    }
    let state = AugmentedState {
        xbar: oi_field.clone(),
        dx1: anomaly,
        dx2: FieldSeq::zeros(t, h, w, oi_field.grid),
    };
    let mask = AugMask { xbar: vec![true; n], dx1: y.mask.clone(), dx2: vec![false; n] };
    Ok((state, mask))
}

/// Initial state: observed components copied where observed, gaps set to 0.
pub fn init_state(aug_obs: &AugmentedState, aug_mask: &AugMask) -> AugmentedState {
    let keep = |f: &FieldSeq, m: &[bool]| {
        let mut out = f.clone();
        for (v, &o) in out.data_mut().iter_mut().zip(m) {
            if !o {
                *v = 0.0;
            }
        }
        out
    };
    AugmentedState {
        xbar: keep(&aug_obs.xbar, &aug_mask.xbar),
        dx1: keep(&aug_obs.dx1, &aug_mask.dx1),
        dx2: keep(&aug_obs.dx2, &aug_mask.dx2),
    }
}

/// Reconstructed field `x̄ + dx₂`.
pub fn reconstruct(x: &AugmentedState) -> FieldSeq {
    x.xbar.zip_map(&x.dx2, |a, b| a + b).expect("components share a shape")
}

/// Stacks states into `[B, 3N, H, W]`.
pub fn states_to_tensor(states: &[AugmentedState]) -> Result<Tensor> {
    let Some(first) = states.first() else {
        return Err(Error::Invalid("empty batch".into()));
    };
    let (t, h, w) = first.dims();
    let mut data = Vec::with_capacity(states.len() * COMPONENTS * t * h * w);
    for s in states {
        if s.dims() != (t, h, w) {
            return Err(Error::shape("states_to_tensor", format!("{:?} vs {:?}", s.dims(), (t, h, w))));
        }
        for c in s.components() {
            data.extend_from_slice(c.data());
        }
    }
    Ok(Tensor::new(data, &[states.len(), COMPONENTS * t, h, w])?)
}

/// Stacks masks into a 0/1 tensor shaped like [`states_to_tensor`].
pub fn masks_to_tensor(masks: &[AugMask], t: usize, h: usize, w: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(masks.len() * COMPONENTS * t * h * w);
    for m in masks {
        for c in m.components() {
            if c.len() != t * h * w {
                return Err(Error::shape("masks_to_tensor", format!("{} cells for {t}x{h}x{w}", c.len())));
            }
            data.extend(c.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        }
    }
    Ok(Tensor::new(data, &[masks.len(), COMPONENTS * t, h, w])?)
}

/// Inverse of [`states_to_tensor`].
pub fn tensor_to_states(x: &Tensor, grid: Grid) -> Result<Vec<AugmentedState>> {
    let s = x.shape();
    if s.len() != 4 || s[1] % COMPONENTS != 0 {
        return Err(Error::shape("tensor_to_states", format!("{s:?}")));
    }
    let (b, t, h, w) = (s[0], s[1] / COMPONENTS, s[2], s[3]);
    let n = t * h * w;
    let data = x.data();
    (0..b)
        .map(|k| {
            let base = k * COMPONENTS * n;
            let part = |c: usize| FieldSeq::new(t, h, w, data[base + c * n..base + (c + 1) * n].to_vec(), grid);
            AugmentedState::new(part(0)?, part(1)?, part(2)?)
        })
        .collect()
}

/// `x̄ + dx₂` on a `[B, 3N, H, W]` tensor, giving `[B, N, H, W]`.
pub fn reconstruct_tensor(x: &Tensor) -> Result<Tensor> {
    let n = x.shape()[1] / COMPONENTS;
    Ok(x.narrow(1, 0, n)?.add(&x.narrow(1, 2 * n, n)?)?)
}
