use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{FieldSeq, Grid};

/// Statistics of the synthetic eddy field. Ranges are `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub n_vortices: usize,
    /// Peak amplitude in meters; the sign is random.
    pub amplitude: [f64; 2],
    /// Gaussian radius in cells.
    pub radius: [f64; 2],
    /// Common advection `(rows, cols)` in cells per day, shared by every eddy.
    pub drift: [f64; 2],
    /// Speed of each eddy relative to the common drift, cells per day,
    /// random heading.
    pub speed: [f64; 2],
    /// Rotation rate of the elliptical shape in radians per day, random sense.
    pub rotation: [f64; 2],
    /// Ratio of major to minor axis.
    pub aspect: [f64; 2],
    /// Total amplitude of the large-scale background, meters.
    pub background_amplitude: f64,
    /// Background wavelength in cells.
    pub background_wavelength: f64,
    pub background_waves: usize,
    /// Period of the background phase drift, days.
    pub background_period: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self::energetic()
    }
}

impl RegimeConfig {
    /// Dense, small, westward-propagating eddies over a weak background.
    pub fn energetic() -> Self {
        Self {
            n_vortices: 36,
            amplitude: [0.1, 0.3],
            radius: [1.5, 4.0],
            drift: [0.0, -1.0],
            speed: [0.0, 0.1],
            rotation: [0.0, 0.1],
            aspect: [1.0, 1.8],
            background_amplitude: 0.1,
            background_wavelength: 32.0,
            background_waves: 3,
            background_period: 60.0,
        }
    }

    /// Same geometry with amplitudes reduced so the mean squared gradient is
    /// one ninth of [`RegimeConfig::energetic`].
    pub fn quiet() -> Self {
        Self::energetic().scaled(1.0 / 9.0)
    }

    /// Multiplies every amplitude by `sqrt(energy_factor)`, which scales all
    /// quadratic statistics of the field by `energy_factor`.
    pub fn scaled(mut self, energy_factor: f64) -> Self {
        let s = energy_factor.sqrt();
        self.amplitude = [self.amplitude[0] * s, self.amplitude[1] * s];
        self.background_amplitude *= s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("amplitude", self.amplitude),
            ("radius", self.radius),
            ("speed", self.speed),
            ("rotation", self.rotation),
            ("aspect", self.aspect),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Config(format!("regime.{name} range {r:?} is empty")));
            }
        }
        if !self.drift.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("regime.drift {:?} is not finite", self.drift)));
        }
        if self.radius[0] < 1.0 {
            return Err(Error::Config("regime.radius must be at least 1 cell".into()));
        }
        if self.aspect[0] < 1.0 {
            return Err(Error::Config("regime.aspect must be at least 1".into()));
        }
        if self.background_waves > 0 && !(self.background_wavelength > 0.0 && self.background_period > 0.0) {
            return Err(Error::Config("background wavelength and period must be positive".into()));
        }
        Ok(())
    }
}

/// One drifting, rotating elliptical Gaussian eddy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vortex {
    pub amplitude: f64,
    pub radius: f64,
    /// Center `(row, col)` at day 0.
    pub center: [f64; 2],
    /// Drift in `(rows, cols)` per day.
    pub velocity: [f64; 2],
    pub rotation: f64,
    pub angle: f64,
    pub aspect: f64,
}

impl Vortex {
    pub fn stationary(amplitude: f64, radius: f64, center: [f64; 2]) -> Self {
        Self { amplitude, radius, center, velocity: [0.0; 2], rotation: 0.0, angle: 0.0, aspect: 1.0 }
    }

    /// Value at cell `(i, j)` and time `t` (days) on an `h x w` periodic grid.
    pub fn value(&self, t: f64, i: f64, j: f64, h: usize, w: usize) -> f64 {
        let ci = self.center[0] + self.velocity[0] * t;
        let cj = self.center[1] + self.velocity[1] * t;
        let dy = min_image(i - ci, h as f64);
        let dx = min_image(j - cj, w as f64);
        let th = self.angle + self.rotation * t;
        let (s, c) = th.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let q = (u * u / self.aspect + v * v * self.aspect) / (2.0 * self.radius * self.radius);
        self.amplitude * (-q).exp()
    }
}

fn min_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    k: [f64; 2],
    phase: f64,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Draws the eddies of a regime.
pub fn draw_vortices(h: usize, w: usize, regime: &RegimeConfig, seed: u64) -> Vec<Vortex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..regime.n_vortices)
        .map(|_| {
            let heading = rng.random_range(0.0..2.0 * PI);
            let speed = uniform(&mut rng, regime.speed);
            Vortex {
                amplitude: sign(&mut rng) * uniform(&mut rng, regime.amplitude),
                radius: uniform(&mut rng, regime.radius),
                center: [rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64)],
                velocity: [regime.drift[0] + speed * heading.sin(), regime.drift[1] + speed * heading.cos()],
                rotation: sign(&mut rng) * uniform(&mut rng, regime.rotation),
                angle: rng.random_range(0.0..PI),
                aspect: uniform(&mut rng, regime.aspect),
            }
        })
        .collect()
}

/// Sum of the given eddies, sampled on the grid.
pub fn render_vortices(t: usize, h: usize, w: usize, grid: Grid, vortices: &[Vortex]) -> FieldSeq {
    FieldSeq::from_fn(t, h, w, grid, |k, i, j| {
        let day = k as f64 * grid.dt_days;
        vortices.iter().map(|v| v.value(day, i as f64, j as f64, h, w)).sum()
    })
}

/// Periodic synthetic truth: drifting eddies plus slowly moving plane waves.
pub fn simulate_truth(t: usize, h: usize, w: usize, grid: Grid, regime: &RegimeConfig, seed: u64) -> Result<FieldSeq> {
    if t == 0 || h == 0 || w == 0 {
        return Err(Error::Invalid(format!("empty extent {t}x{h}x{w}")));
    }
    regime.validate()?;
    let vortices = draw_vortices(h, w, regime, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let waves: Vec<Wave> = (0..regime.background_waves)
        .map(|_| {
            let dir = rng.random_range(0.0..2.0 * PI);
            let n = w.max(h) as f64 / regime.background_wavelength;
            let (mut ky, kx) = ((n * dir.sin()).round(), (n * dir.cos()).round());
            if ky == 0.0 && kx == 0.0 {
                ky = 1.0;
            }
            Wave { k: [ky / h as f64, kx / w as f64], phase: rng.random_range(0.0..2.0 * PI) }
        })
        .collect();
    let wave_amp = if waves.is_empty() { 0.0 } else { regime.background_amplitude / (waves.len() as f64).sqrt() };
    let omega = if regime.background_period > 0.0 { 2.0 * PI / regime.background_period } else { 0.0 };
    let mut field = render_vortices(t, h, w, grid, &vortices);
    if wave_amp != 0.0 {
        for k in 0..t {
            let day = k as f64 * grid.dt_days;
            let frame = field.frame_mut(k);
            for i in 0..h {
                for j in 0..w {
                    let bg: f64 = waves
                        .iter()
                        .map(|wv| (2.0 * PI * (wv.k[0] * i as f64 + wv.k[1] * j as f64) + wv.phase + omega * day).cos())
                        .sum();
                    frame[i * w + j] += wave_amp * bg;
                }
            }
        }
    }
    Ok(field)
}

/// Mean over all frames of `|∇x|²` with circular central differences.
pub fn mean_squared_gradient(f: &FieldSeq) -> f64 {
    let (t, h, w) = f.dims();
    let mut acc = 0.0;
    for k in 0..t {
        for i in 0..h {
            for j in 0..w {
                let gx = 0.5 * (f.get(k, i, (j + 1) % w) - f.get(k, i, (j + w - 1) % w));
                let gy = 0.5 * (f.get(k, (i + 1) % h, j) - f.get(k, (i + h - 1) % h, j));
                acc += gx * gx + gy * gy;
            }
        }
    }
    acc / (t * h * w) as f64
}
