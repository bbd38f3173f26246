//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use dvarnet::osse::OiConfig;
use dvarnet::{FieldSeq, Grid, ObsPoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Squared-exponential covariance summed over periodic images.
pub fn periodic_se(d: i64, n: usize, l: f64) -> f64 {
    (-40i64..=40).map(|m| {
        let x = (d + m * n as i64) as f64;
        (-x * x / (2.0 * l * l)).exp()
    }).sum()
}

pub fn cov(p: (usize, usize, usize), q: (usize, usize, usize), dims: (usize, usize, usize), grid: Grid, cfg: &OiConfig) -> f64 {
    let dt = (p.0 as f64 - q.0 as f64) * grid.dt_days;
    cfg.signal_var
        * (-dt * dt / (2.0 * cfg.lt * cfg.lt)).exp()
        * periodic_se(p.1 as i64 - q.1 as i64, dims.1, cfg.ly)
        * periodic_se(p.2 as i64 - q.2 as i64, dims.2, cfg.lx)
}

/// Posterior mean by one dense solve of the full kernel system.
pub fn dense_oi(points: &[ObsPoint], dims: (usize, usize, usize), grid: Grid, cfg: &OiConfig) -> Vec<f64> {
    let n = points.len();
    let key = |p: &ObsPoint| (p.t, p.i, p.j);
    let k = DMatrix::from_fn(n, n, |a, b| cov(key(&points[a]), key(&points[b]), dims, grid, cfg) + if a == b { cfg.noise_var } else { 0.0 });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.value));
    let beta = k.lu().solve(&y).expect("nonsingular");
    let (t, h, w) = dims;
    let mut out = Vec::with_capacity(t * h * w);
    for a in 0..t {
        for i in 0..h {
            for j in 0..w {
                out.push(points.iter().zip(beta.iter()).map(|(p, b)| b * cov((a, i, j), key(p), dims, grid, cfg)).sum());
            }
        }
    }
    out
}

/// Random small gridding problem with distinct observation cells.
pub fn random_oi_instance(seed: u64) -> (Vec<ObsPoint>, (usize, usize, usize), OiConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (rng.random_range(1..6), rng.random_range(2..12), rng.random_range(2..12));
    let cells = dims.0 * dims.1 * dims.2;
    let n = rng.random_range(1..=cells.min(200));
    let mut idx: Vec<usize> = (0..cells).collect();
    for k in 0..n {
        let r = rng.random_range(k..cells);
        idx.swap(k, r);
    }
    let points = idx[..n]
        .iter()
        .map(|&c| ObsPoint { t: c / (dims.1 * dims.2), i: (c / dims.2) % dims.1, j: c % dims.2, value: rng.random_range(-0.5..0.5) })
        .collect();
    let cfg = OiConfig {
        lx: rng.random_range(0.8..5.0),
        ly: rng.random_range(0.8..5.0),
        lt: rng.random_range(0.5..4.0),
        signal_var: rng.random_range(0.005..0.05),
        noise_var: rng.random_range(1e-4..1e-2),
        max_obs: None,
        halo_days: None,
    };
    (points, dims, cfg)
}

/// Ideal spatial low-pass: keeps Fourier modes with wavelength at least
/// `cutoff_cells`, frame by frame.
pub fn low_pass(f: &FieldSeq, cutoff_cells: f64) -> FieldSeq {
    let (t, h, w) = f.dims();
    let mut planner = FftPlanner::<f64>::new();
    let (fr, fc) = (planner.plan_fft_forward(w), planner.plan_fft_forward(h));
    let (ir, ic) = (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h));
    let mut out = Vec::with_capacity(t * h * w);
    for k in 0..t {
        let mut buf: Vec<Complex<f64>> = f.frame(k).iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in buf.chunks_mut(w) {
            fr.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                col[i] = buf[i * w + j];
            }
            fc.process(&mut col);
            for i in 0..h {
                let ky = (i.min(h - i)) as f64 / h as f64;
                let kx = (j.min(w - j)) as f64 / w as f64;
                let kk = (kx * kx + ky * ky).sqrt();
                if kk > 1.0 / cutoff_cells {
                    col[i] = Complex::new(0.0, 0.0);
                }
            }
            ic.process(&mut col);
            for i in 0..h {
                buf[i * w + j] = col[i];
            }
        }
        for row in buf.chunks_mut(w) {
            ir.process(row);
        }
        out.extend(buf.iter().map(|c| c.re / (h * w) as f64));
    }
    FieldSeq::new(t, h, w, out, f.grid).unwrap()
}

/// Radially binned spatial power, averaged over frames; bin `r` collects
/// `round(|k|·n)` with `n = min(h, w)`.
pub fn radial_power(f: &FieldSeq) -> Vec<f64> {
    let (t, h, w) = f.dims();
    let n = h.min(w);
    let mut planner = FftPlanner::<f64>::new();
    let (fr, fc) = (planner.plan_fft_forward(w), planner.plan_fft_forward(h));
    let mut bins = vec![0.0; n];
    for k in 0..t {
        let mut buf: Vec<Complex<f64>> = f.frame(k).iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in buf.chunks_mut(w) {
            fr.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                col[i] = buf[i * w + j];
            }
            fc.process(&mut col);
            for i in 0..h {
                let ky = (i.min(h - i)) as f64 / h as f64;
                let kx = (j.min(w - j)) as f64 / w as f64;
                let r = ((kx * kx + ky * ky).sqrt() * n as f64).round() as usize;
                if r < n {
                    bins[r] += col[i].norm_sqr();
                }
            }
        }
    }
    bins
}

/// A 24-day 16×16 experiment with small networks that trains in seconds.
pub fn tiny_config() -> dvarnet::config::ExperimentConfig {
    use dvarnet::config::{DomainConfig, ExperimentConfig, Period, Periods};
    let mut c = ExperimentConfig::default();
    c.domain = DomainConfig { t: 24, h: 16, w: 16, ..DomainConfig::default() };
    c.periods = Periods { test: Period::days(2, 9), val: Period::days(10, 15), train: Period::days(16, 23) };
    c.model.prior.hidden = 4;
    c.model.prior.bilinear = 2;
    c.model.prior.blocks = 1;
    c.model.solver.hidden = 4;
    c.model.solver.n_iter = 2;
    c.train.epochs = 1;
    c.train.patch = [7, 16, 16];
    c.train.stride = Some([1, 16, 16]);
    c.oi.max_obs = None;
    c
}
