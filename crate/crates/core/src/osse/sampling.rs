use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSeq, ObsSet};

/// cm² to m².
pub const CM2_TO_M2: f64 = 1e-4;

/// Daily nadir altimeter tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NadirConfig {
    pub tracks_per_day: usize,
    /// Track direction in degrees from the column axis, `[min, max]`.
    pub angle_deg: [f64; 2],
    /// Across-track width in cells.
    pub width: usize,
    /// Per-track noise variance range in cm².
    pub noise_var_cm2: [f64; 2],
}

impl Default for NadirConfig {
    fn default() -> Self {
        Self { tracks_per_day: 4, angle_deg: [55.0, 125.0], width: 1, noise_var_cm2: [4.0, 9.0] }
    }
}

/// Wide-swath passes on revisit days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwathConfig {
    /// Full band width in cells, gap included.
    pub width: usize,
    /// Unobserved strip at the band center, cells.
    pub gap: usize,
    pub revisit_days: usize,
    /// First pass day.
    pub phase: usize,
    pub angle_deg: [f64; 2],
    /// Noise variance in cm²; 0 gives error-free values.
    pub noise_var_cm2: f64,
}

impl Default for SwathConfig {
    fn default() -> Self {
        Self { width: 12, gap: 2, revisit_days: 3, phase: 0, angle_deg: [70.0, 110.0], noise_var_cm2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub nadir: Option<NadirConfig>,
    pub swath: Option<SwathConfig>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { nadir: Some(NadirConfig::default()), swath: Some(SwathConfig::default()) }
    }
}

impl NadirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("nadir.width must be at least 1".into()));
        }
        let r = self.noise_var_cm2;
        if !(0.0 <= r[0] && r[0] <= r[1]) || !(self.angle_deg[0] <= self.angle_deg[1]) {
            return Err(Error::Config(format!("invalid nadir ranges: {self:?}")));
        }
        Ok(())
    }
}

impl SwathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.revisit_days == 0 || self.gap >= self.width {
            return Err(Error::Config(format!("swath needs width > gap and revisit >= 1: {self:?}")));
        }
        if self.noise_var_cm2 < 0.0 || !(self.angle_deg[0] <= self.angle_deg[1]) {
            return Err(Error::Config(format!("invalid swath ranges: {self:?}")));
        }
        Ok(())
    }
}

/// Cells of a straight wrapped line with across-track offsets.
///
/// Mostly horizontal lines (|angle| within 45° of the column axis) are
/// placed one column at a time with vertical offsets, others one row at a
/// time with horizontal offsets, so every offset adds exactly one cell per
/// column (or row).
fn band_cells(h: usize, w: usize, angle_deg: f64, origin: f64, offsets: &[i64]) -> Vec<(usize, usize)> {
    let th = angle_deg.to_radians();
    let (s, c) = th.sin_cos();
    let mut cells = Vec::new();
    if c.abs() >= s.abs() {
        let slope = s / c;
        for j in 0..w {
            let center = (origin + slope * j as f64).round() as i64;
            for &o in offsets {
                cells.push(((center + o).rem_euclid(h as i64) as usize, j));
            }
        }
    } else {
        let slope = c / s;
        for i in 0..h {
            let center = (origin + slope * i as f64).round() as i64;
            for &o in offsets {
                cells.push((i, (center + o).rem_euclid(w as i64) as usize));
            }
        }
    }
    cells
}

fn draw<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn noise<R: Rng>(rng: &mut R, var_m2: f64) -> f64 {
    if var_m2 == 0.0 {
        0.0
    } else {
        Normal::new(0.0, var_m2.sqrt()).expect("finite std").sample(rng)
    }
}

/// Nadir pseudo-observations: per day, `tracks_per_day` straight lines with
/// random direction and position, each with its own noise variance.
pub fn sample_nadir(truth: &FieldSeq, cfg: &NadirConfig, seed: u64) -> Result<ObsSet> {
    cfg.validate()?;
    let (t, h, w) = truth.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = FieldSeq::zeros(t, h, w, truth.grid);
    let mut mask = vec![false; t * h * w];
    let offsets: Vec<i64> = (0..cfg.width as i64).map(|o| o - (cfg.width as i64 - 1) / 2).collect();
    for k in 0..t {
        for _ in 0..cfg.tracks_per_day {
            let angle = draw(&mut rng, cfg.angle_deg);
            let origin = rng.random_range(0.0..h.max(w) as f64);
            let var = draw(&mut rng, cfg.noise_var_cm2) * CM2_TO_M2;
            for (i, j) in band_cells(h, w, angle, origin, &offsets) {
                let idx = truth.index(k, i, j);
                values.data_mut()[idx] = truth.data()[idx] + noise(&mut rng, var);
                mask[idx] = true;
            }
        }
    }
    ObsSet::new(values, mask)
}

/// Swath pseudo-observations on days `phase, phase + revisit, ...`.
pub fn sample_swath(truth: &FieldSeq, cfg: &SwathConfig, seed: u64) -> Result<ObsSet> {
    cfg.validate()?;
    let (t, h, w) = truth.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = FieldSeq::zeros(t, h, w, truth.grid);
    let mut mask = vec![false; t * h * w];
    let half = cfg.width as i64 / 2;
    let gap_start = (cfg.width - cfg.gap) as i64 / 2;
    let offsets: Vec<i64> = (0..cfg.width as i64)
        .filter(|o| *o < gap_start || *o >= gap_start + cfg.gap as i64)
        .map(|o| o - half)
        .collect();
    let var = cfg.noise_var_cm2 * CM2_TO_M2;
    for k in (cfg.phase..t).step_by(cfg.revisit_days) {
        let angle = draw(&mut rng, cfg.angle_deg);
        let origin = rng.random_range(0.0..h.max(w) as f64);
        for (i, j) in band_cells(h, w, angle, origin, &offsets) {
            let idx = truth.index(k, i, j);
            values.data_mut()[idx] = truth.data()[idx] + noise(&mut rng, var);
            mask[idx] = true;
        }
    }
    ObsSet::new(values, mask)
}

/// Union of two observation sets; `b` wins where both observe.
pub fn merge_obs(a: &ObsSet, b: &ObsSet) -> Result<ObsSet> {
    if a.dims() != b.dims() {
        return Err(Error::shape("merge_obs", format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let mut values = a.values.clone();
    let mut mask = a.mask.clone();
    for (idx, &m) in b.mask.iter().enumerate() {
        if m {
            values.data_mut()[idx] = b.values.data()[idx];
            mask[idx] = true;
        }
    }
    ObsSet::new(values, mask)
}

/// Samples every configured instrument and merges them, swath over nadir.
pub fn sample_all(truth: &FieldSeq, cfg: &SamplingConfig, seed: u64) -> Result<(Option<ObsSet>, Option<ObsSet>, ObsSet)> {
    let (t, h, w) = truth.dims();
    let nadir = cfg.nadir.as_ref().map(|c| sample_nadir(truth, c, seed)).transpose()?;
    let swath = cfg.swath.as_ref().map(|c| sample_swath(truth, c, seed.wrapping_add(0x5157_4154))).transpose()?;
    let mut merged = ObsSet::empty(t, h, w, truth.grid);
    for o in [&nadir, &swath].into_iter().flatten() {
        merged = merge_obs(&merged, o)?;
    }
    Ok((nadir, swath, merged))
}
