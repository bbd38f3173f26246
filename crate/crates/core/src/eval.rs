//! Reconstruction skill: normalized RMSE scores and spectral resolved scales.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSeq;

/// Resolution threshold on the spectral score.
pub const PSD_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mu_rmse_score: f64,
    pub sigma_rmse_score: f64,
    /// Degrees.
    pub lambda_x: f64,
    /// Days.
    pub lambda_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseScores {
    pub per_day: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

fn check_shapes(op: &'static str, a: &FieldSeq, b: &FieldSeq) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Daily `1 − RMSE(x̂, x) / RMS(x)` with its mean and population deviation.
pub fn rmse_score_series(x_hat: &FieldSeq, x_true: &FieldSeq) -> Result<RmseScores> {
    check_shapes("rmse_score_series", x_hat, x_true)?;
    let per_day = (0..x_true.len_t())
        .map(|t| {
            let (a, b) = (x_hat.frame(t), x_true.frame(t));
            let n = b.len() as f64;
            let rms = (b.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            if rms == 0.0 {
                return Err(Error::Invalid(format!("truth is identically zero on day {t}")));
            }
            let rmse = (a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n).sqrt();
            Ok(1.0 - rmse / rms)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = per_day.len() as f64;
    let mu = per_day.iter().sum::<f64>() / n;
    let sigma = (per_day.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n).sqrt();
    Ok(RmseScores { per_day, mu, sigma })
}

/// Per-cell RMSE over days (one frame) and per-day RMSE over cells.
pub fn error_maps(x_hat: &FieldSeq, x_true: &FieldSeq) -> Result<(FieldSeq, Vec<f64>)> {
    check_shapes("error_maps", x_hat, x_true)?;
    let (t, h, w) = x_true.dims();
    let mut map = vec![0.0; h * w];
    let mut series = Vec::with_capacity(t);
    for k in 0..t {
        let mut acc = 0.0;
        for (c, (p, q)) in x_hat.frame(k).iter().zip(x_true.frame(k)).enumerate() {
            let e2 = (p - q) * (p - q);
            map[c] += e2;
            acc += e2;
        }
        series.push((acc / (h * w) as f64).sqrt());
    }
    let map = map.into_iter().map(|v| (v / t as f64).sqrt()).collect();
    Ok((FieldSeq::new(1, h, w, map, x_true.grid)?, series))
}

/// Spectral score on (spatial wavenumber, frequency) bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    /// Spatial wavelength of each wavenumber bin, degrees.
    pub wavelength_x: Vec<f64>,
    /// Period of each frequency bin, days; infinite for the time mean.
    pub wavelength_t: Vec<f64>,
    /// Row-major `[wavenumber][frequency]`, NaN where the truth has no power.
    pub score: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScales {
    pub lambda_x: f64,
    pub lambda_t: f64,
    /// Frequency-summed score per wavenumber bin.
    pub score_x: Vec<f64>,
    /// Wavenumber-summed score per frequency bin.
    pub score_t: Vec<f64>,
    pub grid: ScoreGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdConfig {
    /// Hann taper in time.
    pub taper_time: bool,
    /// Hann taper in space; off by default because the synthetic domain is
    /// periodic and tapering it only adds leakage.
    pub taper_space: bool,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self { taper_time: true, taper_space: false }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// 3-D power spectrum after mean removal and tapering.
fn power(f: &FieldSeq, cfg: &PsdConfig) -> Vec<f64> {
    let (t, h, w) = f.dims();
    let mean = f.data().iter().sum::<f64>() / f.data().len() as f64;
    let ones = |n: usize| vec![1.0; n];
    let wt = if cfg.taper_time { hann(t) } else { ones(t) };
    let (wy, wx) = if cfg.taper_space { (hann(h), hann(w)) } else { (ones(h), ones(w)) };
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(t * h * w);
    for k in 0..t {
        for i in 0..h {
            for j in 0..w {
                buf.push(Complex::new((f.get(k, i, j) - mean) * wt[k] * wy[i] * wx[j], 0.0));
            }
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    fft_axis(&mut buf, &mut planner, w, 1, t * h);
    fft_axis(&mut buf, &mut planner, h, w, t);
    fft_axis(&mut buf, &mut planner, t, h * w, 1);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// In-place FFT along an axis of length `n` with element stride `stride`,
/// repeated over `outer` blocks of `n * stride` elements.
fn fft_axis(buf: &mut [Complex<f64>], planner: &mut FftPlanner<f64>, n: usize, stride: usize, outer: usize) {
    let fft = planner.plan_fft_forward(n);
    let mut line = vec![Complex::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for k in 0..n {
                line[k] = buf[base + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                buf[base + k * stride] = line[k];
            }
        }
    }
}

fn signed(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Wavelength at the first drop of `score` below the threshold, scanning
/// bins from `start` towards small scales and interpolating linearly in
/// wavenumber. `bin_wavenumber` maps a fractional bin index to cycles per
/// unit. Without a crossing the finest bin is returned.
fn crossing(score: &[f64], start: usize, bin_wavenumber: impl Fn(f64) -> f64) -> f64 {
    let last = score.len() - 1;
    let mut prev: Option<(usize, f64)> = None;
    for r in start..=last {
        let s = score[r];
        if s.is_nan() {
            continue;
        }
        if s < PSD_THRESHOLD {
            return match prev {
                None => 1.0 / bin_wavenumber(r as f64),
                Some((rp, sp)) => {
                    let frac = (sp - PSD_THRESHOLD) / (sp - s);
                    1.0 / bin_wavenumber(rp as f64 + frac * (r - rp) as f64)
                }
            };
        }
        prev = Some((r, s));
    }
    1.0 / bin_wavenumber(last as f64)
}

/// Minimal resolved spatial (degrees) and temporal (days) scales, where the
/// spectral score `1 − PSD(x̂ − x) / PSD(x)` falls below 0.5.
pub fn psd_resolved_scales(x_hat: &FieldSeq, x_true: &FieldSeq) -> Result<ResolvedScales> {
    psd_resolved_scales_with(x_hat, x_true, &PsdConfig::default())
}

pub fn psd_resolved_scales_with(x_hat: &FieldSeq, x_true: &FieldSeq, cfg: &PsdConfig) -> Result<ResolvedScales> {
    check_shapes("psd_resolved_scales", x_hat, x_true)?;
    let (t, h, w) = x_true.dims();
    if t < 4 || h < 4 || w < 4 {
        return Err(Error::Invalid(format!("spectral scores need at least 4x4x4 samples, got {t}x{h}x{w}")));
    }
    if x_true.data().iter().all(|&v| v == 0.0) {
        return Err(Error::Invalid("truth is identically zero".into()));
    }
    let err = x_hat.zip_map(x_true, |a, b| a - b)?;
    let (pe, pt) = (power(&err, cfg), power(x_true, cfg));

    // Isotropic wavenumber bins in units of 1/L, L = min(h, w) cells.
    let l = h.min(w) as f64;
    let nk = h.min(w) / 2 + 1;
    let nf = t / 2 + 1;
    let mut bin_e = vec![0.0; nk * nf];
    let mut bin_t = vec![0.0; nk * nf];
    for k in 0..t {
        let f = (signed(k, t).abs()) as usize;
        for i in 0..h {
            let ky = signed(i, h) / h as f64;
            for j in 0..w {
                let kx = signed(j, w) / w as f64;
                let r = ((ky * ky + kx * kx).sqrt() * l).round() as usize;
                if r >= nk {
                    continue;
                }
                let idx = (k * h + i) * w + j;
                bin_e[r * nf + f] += pe[idx];
                bin_t[r * nf + f] += pt[idx];
            }
        }
    }
    let ratio = |e: f64, p: f64| {
        if p > 0.0 {
            1.0 - e / p
        } else if e > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        }
    };
    let score: Vec<f64> = bin_e.iter().zip(&bin_t).map(|(&e, &p)| ratio(e, p)).collect();
    let score_x: Vec<f64> = (0..nk)
        .map(|r| ratio((0..nf).map(|f| bin_e[r * nf + f]).sum(), (0..nf).map(|f| bin_t[r * nf + f]).sum()))
        .collect();
    let score_t: Vec<f64> = (0..nf)
        .map(|f| ratio((0..nk).map(|r| bin_e[r * nf + f]).sum(), (0..nk).map(|r| bin_t[r * nf + f]).sum()))
        .collect();

    let cell = x_true.grid.cell_deg;
    let dt = x_true.grid.dt_days;
    let lambda_x = (crossing(&score_x, 1, |r| r / l) * cell).max(2.0 * cell);
    let lambda_t = (crossing(&score_t, 1, |m| m / t as f64) * dt).max(2.0 * dt);
    let grid = ScoreGrid {
        wavelength_x: (0..nk).map(|r| if r == 0 { f64::INFINITY } else { l / r as f64 * cell }).collect(),
        wavelength_t: (0..nf).map(|m| if m == 0 { f64::INFINITY } else { t as f64 / m as f64 * dt }).collect(),
        score,
    };
    Ok(ResolvedScales { lambda_x, lambda_t, score_x, score_t, grid })
}

/// All four summary metrics.
pub fn metrics(x_hat: &FieldSeq, x_true: &FieldSeq) -> Result<MetricsRecord> {
    let s = rmse_score_series(x_hat, x_true)?;
    let p = psd_resolved_scales(x_hat, x_true)?;
    Ok(MetricsRecord { mu_rmse_score: s.mu, sigma_rmse_score: s.sigma, lambda_x: p.lambda_x, lambda_t: p.lambda_t })
}
