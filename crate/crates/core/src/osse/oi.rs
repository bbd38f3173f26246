//! Gaussian-process gridding with a separable squared-exponential
//! covariance, periodic in space.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSeq, Grid, ObsPoint, ObsSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OiConfig {
    /// Length scale along columns, cells.
    pub lx: f64,
    /// Length scale along rows, cells.
    pub ly: f64,
    /// Time scale, days.
    pub lt: f64,
    /// Prior variance of the field, m².
    pub signal_var: f64,
    /// Observation noise variance (nugget), m².
    pub noise_var: f64,
    /// Largest system solved at once; `None` solves everything together.
    pub max_obs: Option<usize>,
    /// Days of observations read on each side of a block; defaults to `2·lt`.
    pub halo_days: Option<usize>,
}

impl Default for OiConfig {
    fn default() -> Self {
        Self {
            lx: 4.0,
            ly: 4.0,
            lt: 3.0,
            signal_var: 0.02,
            noise_var: 1e-3,
            max_obs: Some(8000),
            halo_days: None,
        }
    }
}

impl OiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lt > 0.0 && self.signal_var > 0.0) {
            return Err(Error::Config(format!("OI scales and signal variance must be positive: {self:?}")));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::Config("OI noise variance must be nonnegative".into()));
        }
        if self.max_obs == Some(0) {
            return Err(Error::Config("OI max_obs must be positive".into()));
        }
        Ok(())
    }

    fn halo_steps(&self, grid: Grid) -> usize {
        self.halo_days.unwrap_or_else(|| (2.0 * self.lt / grid.dt_days).ceil() as usize)
    }
}

/// Covariance factors tabulated on integer offsets.
struct Kernel {
    signal_var: f64,
    time: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
    h: usize,
    w: usize,
}

/// `sum_m exp(-(d + m n)² / 2l²)` for `d = 0..n`, exactly symmetric in `d -> n - d`.
fn periodic_table(n: usize, l: f64) -> Vec<f64> {
    let images = (6.0 * l / n as f64).ceil() as i64 + 1;
    (0..n)
        .map(|d| {
            let d = d.min(n - d);
            (-images..=images)
                .map(|m| {
                    let x = d as f64 + (m * n as i64) as f64;
                    (-x * x / (2.0 * l * l)).exp()
                })
                .sum()
        })
        .collect()
}

impl Kernel {
    fn new(cfg: &OiConfig, t: usize, h: usize, w: usize, grid: Grid) -> Self {
        let lt = cfg.lt / grid.dt_days;
        Self {
            signal_var: cfg.signal_var,
            time: (0..t).map(|d| (-((d * d) as f64) / (2.0 * lt * lt)).exp()).collect(),
            rows: periodic_table(h, cfg.ly),
            cols: periodic_table(w, cfg.lx),
            h,
            w,
        }
    }

    fn row(&self, a: usize, b: usize) -> f64 {
        self.rows[(a + self.h - b) % self.h]
    }

    fn col(&self, a: usize, b: usize) -> f64 {
        self.cols[(a + self.w - b) % self.w]
    }

    fn eval(&self, p: &ObsPoint, q: &ObsPoint) -> f64 {
        self.signal_var * self.time[p.t.abs_diff(q.t)] * self.row(p.i, q.i) * self.col(p.j, q.j)
    }
}

/// Kernel weights `(K + σ²I)⁻¹ y` for one set of points.
fn solve_weights(points: &[ObsPoint], kernel: &Kernel, noise_var: f64) -> Result<Vec<f64>> {
    if noise_var == 0.0 {
        let mut keys: Vec<(usize, usize, usize)> = points.iter().map(|p| (p.t, p.i, p.j)).collect();
        keys.sort_unstable();
        if let Some(d) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Singular(format!(
                "duplicate observation at (t, i, j) = {:?} with zero noise variance; set noise_var > 0",
                d[0]
            )));
        }
    }
    let n = points.len();
    let k = Mat::<f64>::from_fn(n, n, |a, b| {
        let v = kernel.eval(&points[a], &points[b]);
        if a == b {
            v + noise_var
        } else {
            v
        }
    });
    let llt = k
        .llt(Side::Lower)
        .map_err(|e| Error::Singular(format!("covariance not positive definite ({e:?}); increase noise_var")))?;
    drop(k);
    let mut rhs = Mat::<f64>::from_fn(n, 1, |a, _| points[a].value);
    llt.solve_in_place(rhs.as_mut());
    let beta: Vec<f64> = (0..n).map(|a| rhs[(a, 0)]).collect();
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite OI weights; increase noise_var".into()));
    }
    Ok(beta)
}

/// Posterior mean on frames `days` given kernel weights.
fn predict(points: &[ObsPoint], beta: &[f64], kernel: &Kernel, days: std::ops::Range<usize>, out: &mut FieldSeq) {
    let (h, w, n) = (kernel.h, kernel.w, points.len());
    let mut cols = vec![0.0; n * w];
    for (a, p) in points.iter().enumerate() {
        for j in 0..w {
            cols[a * w + j] = kernel.col(j, p.j);
        }
    }
    let mut rows = vec![0.0; h * n];
    for t in days {
        for (a, p) in points.iter().enumerate() {
            let s = kernel.signal_var * kernel.time[t.abs_diff(p.t)] * beta[a];
            for i in 0..h {
                rows[i * n + a] = s * kernel.row(i, p.i);
            }
        }
        let frame = out.frame_mut(t);
        // SAFETY: slices are sized h*n, n*w and h*w with row-major strides.
        unsafe {
            matrixmultiply::dgemm(
                h, n, w, 1.0, rows.as_ptr(), n as isize, 1, cols.as_ptr(), w as isize, 1, 0.0,
                frame.as_mut_ptr(), w as isize, 1,
            );
        }
    }
}

/// Posterior mean on a `t x h x w` grid from scattered points, in a single
/// solve. The result does not depend on the order of `points`.
pub fn oi_points(points: &[ObsPoint], dims: (usize, usize, usize), grid: Grid, cfg: &OiConfig) -> Result<FieldSeq> {
    cfg.validate()?;
    let (t, h, w) = dims;
    let mut out = FieldSeq::zeros(t, h, w, grid);
    if points.is_empty() {
        return Ok(out);
    }
    if let Some(p) = points.iter().find(|p| p.t >= t || p.i >= h || p.j >= w) {
        return Err(Error::Invalid(format!("observation {p:?} outside {t}x{h}x{w}")));
    }
    let kernel = Kernel::new(cfg, t, h, w, grid);
    let beta = solve_weights(points, &kernel, cfg.noise_var)?;
    predict(points, &beta, &kernel, 0..t, &mut out);
    Ok(out)
}

/// Day blocks `[start, end)` whose observations, including a halo on each
/// side, fit in `max_obs`.
fn blocks(counts: &[usize], halo: usize, max_obs: usize) -> Result<Vec<(usize, usize, usize, usize)>> {
    let t = counts.len();
    let window = |a: usize, b: usize, halo: usize| -> usize { counts[a.saturating_sub(halo)..(b + halo).min(t)].iter().sum() };
    let mut out = Vec::new();
    let mut a = 0;
    while a < t {
        let mut hl = halo;
        while window(a, a + 1, hl) > max_obs {
            if hl == 0 {
                return Err(Error::Config(format!(
                    "day {a} alone has {} observations, above OI max_obs = {max_obs}",
                    counts[a]
                )));
            }
            hl -= 1;
        }
        let mut b = a + 1;
        while b < t && window(a, b + 1, hl) <= max_obs {
            b += 1;
        }
        out.push((a, b, a.saturating_sub(hl), (b + hl).min(t)));
        a = b;
    }
    Ok(out)
}

/// Optimal interpolation of a gappy field. Without observations the prior
/// mean (zero) is returned.
///
/// When the observations exceed `max_obs`, days are split into consecutive
/// blocks, each solved with the observations of the block and its halo.
pub fn optimal_interp(obs: &ObsSet, cfg: &OiConfig) -> Result<FieldSeq> {
    cfg.validate()?;
    let (t, h, w) = obs.dims();
    let grid = obs.values.grid;
    let mut out = FieldSeq::zeros(t, h, w, grid);
    let points = obs.points();
    if points.is_empty() {
        return Ok(out);
    }
    let kernel = Kernel::new(cfg, t, h, w, grid);
    let max_obs = cfg.max_obs.unwrap_or(usize::MAX);
    let counts: Vec<usize> = (0..t).map(|k| obs.frame_count(k)).collect();
    for (a, b, lo, hi) in blocks(&counts, cfg.halo_steps(grid), max_obs)? {
        let sel: Vec<ObsPoint> = points.iter().copied().filter(|p| p.t >= lo && p.t < hi).collect();
        if sel.is_empty() {
            continue;
        }
        let beta = solve_weights(&sel, &kernel, cfg.noise_var)?;
        predict(&sel, &beta, &kernel, a..b, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_days_in_order() {
        let counts = vec![10; 20];
        let b = blocks(&counts, 2, 60).unwrap();
        assert_eq!(b.first().unwrap().0, 0);
        assert_eq!(b.last().unwrap().1, 20);
        for w in b.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        for &(a, e, lo, hi) in &b {
            assert!(counts[lo..hi].iter().sum::<usize>() <= 60);
            assert!(lo <= a && e <= hi);
        }
    }

    #[test]
    fn oversized_day_is_rejected() {
        assert!(matches!(blocks(&[5, 100, 5], 1, 50), Err(Error::Config(_))));
    }

    #[test]
    fn periodic_table_is_symmetric() {
        let t = periodic_table(16, 3.0);
        for d in 1..16 {
            assert_eq!(t[d], t[16 - d]);
        }
    }
}
