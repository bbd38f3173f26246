mod common;

use dvarnet::eval::{error_maps, metrics, psd_resolved_scales, psd_resolved_scales_with, rmse_score_series, PsdConfig};
use dvarnet::{Error, FieldSeq, Grid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(t: usize, h: usize, w: usize, seed: u64) -> FieldSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FieldSeq::from_fn(t, h, w, Grid::default(), |_, _, _| rng.random_range(-1.0..1.0))
}

#[test]
fn perfect_reconstruction_scores() {
    let x = noise(16, 32, 32, 1);
    let m = metrics(&x, &x).unwrap();
    assert_eq!(m.mu_rmse_score, 1.0);
    assert_eq!(m.sigma_rmse_score, 0.0);
    // No crossing: the finest resolvable scales, two cells and two days.
    assert!((m.lambda_x - 0.2).abs() < 1e-12);
    assert!((m.lambda_t - 2.0).abs() < 1e-12);
}

#[test]
fn zero_reconstruction_scores() {
    let x = noise(16, 32, 32, 2);
    let z = FieldSeq::zeros(16, 32, 32, Grid::default());
    let s = rmse_score_series(&z, &x).unwrap();
    assert!(s.per_day.iter().all(|v| v.abs() < 1e-15));
    let p = psd_resolved_scales(&z, &x).unwrap();
    // Score 0 at the first bin gives the domain length.
    assert!((p.lambda_x - 3.2).abs() < 1e-12, "{}", p.lambda_x);
    assert!((p.lambda_t - 16.0).abs() < 1e-12, "{}", p.lambda_t);
}

#[test]
fn rmse_score_hand_values() {
    let g = Grid::default();
    let x = FieldSeq::new(2, 1, 2, vec![3.0, 4.0, 1.0, -1.0], g).unwrap();
    let y = FieldSeq::new(2, 1, 2, vec![3.0, 4.0 - 2.0_f64.sqrt() * 0.5, 1.0, 0.0], g).unwrap();
    let s = rmse_score_series(&y, &x).unwrap();
    // rms day 0 = 5/sqrt2, rmse = 0.5; day 1 rms 1, rmse 1/sqrt2.
    let d0 = 1.0 - 0.5 / (12.5_f64).sqrt();
    let d1 = 1.0 - 0.5_f64.sqrt();
    assert!((s.per_day[0] - d0).abs() < 1e-15 && (s.per_day[1] - d1).abs() < 1e-15);
    assert!((s.mu - 0.5 * (d0 + d1)).abs() < 1e-15);
    assert!((s.sigma - 0.5 * (d0 - d1).abs()).abs() < 1e-15);
}

#[test]
fn degenerate_truth_is_rejected() {
    let z = FieldSeq::zeros(8, 8, 8, Grid::default());
    assert!(matches!(rmse_score_series(&z, &z), Err(Error::Invalid(_))));
    assert!(matches!(psd_resolved_scales(&z, &z), Err(Error::Invalid(_))));
    let x = noise(8, 8, 8, 0);
    assert!(matches!(metrics(&x.slice_t(0, 4).unwrap(), &x), Err(Error::Shape { .. })));
    let tiny = noise(2, 8, 8, 0);
    assert!(psd_resolved_scales(&tiny, &tiny).is_err());
}

#[test]
fn low_pass_cutoff_is_recovered() {
    let x = noise(8, 64, 64, 3);
    for cutoff in [4.0, 8.0, 16.0] {
        let y = common::low_pass(&x, cutoff);
        let lx = psd_resolved_scales(&y, &x).unwrap().lambda_x / 0.1;
        assert!((lx / cutoff - 1.0).abs() < 0.25, "cutoff {cutoff}: {lx}");
    }
}

#[test]
fn resolved_scale_grows_with_smoothing() {
    let x = noise(8, 64, 64, 4);
    let mut last = 0.0;
    for cutoff in [3.0, 5.0, 8.0, 12.0, 20.0, 32.0] {
        let lx = psd_resolved_scales(&common::low_pass(&x, cutoff), &x).unwrap().lambda_x;
        assert!(lx >= last, "{cutoff}: {lx} < {last}");
        last = lx;
    }
}

#[test]
fn spatial_taper_option_runs() {
    let x = noise(8, 32, 32, 5);
    let y = common::low_pass(&x, 6.0);
    let a = psd_resolved_scales_with(&y, &x, &PsdConfig { taper_time: false, taper_space: true }).unwrap();
    assert!(a.lambda_x > 0.2 && a.lambda_x < 3.2);
    assert_eq!(a.score_x.len(), 17);
    assert_eq!(a.score_t.len(), 5);
    assert_eq!(a.grid.score.len(), 17 * 5);
}

#[test]
fn error_maps_values() {
    let x = noise(4, 6, 5, 6);
    let (m, s) = error_maps(&x, &x).unwrap();
    assert!(m.data().iter().chain(&s).all(|&v| v == 0.0));
    let mut y = x.clone();
    let idx = y.index(2, 3, 1);
    y.data_mut()[idx] += 0.4;
    let (m, s) = error_maps(&y, &x).unwrap();
    assert_eq!(m.dims(), (1, 6, 5));
    for i in 0..6 {
        for j in 0..5 {
            let e = if (i, j) == (3, 1) { 0.4 / 2.0 } else { 0.0 };
            assert!((m.get(0, i, j) - e).abs() < 1e-15);
        }
    }
    for (k, v) in s.iter().enumerate() {
        let e = if k == 2 { 0.4 / 30.0_f64.sqrt() } else { 0.0 };
        assert!((v - e).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn error_maps_match_direct_sums(seed in any::<u64>()) {
        let (x, y) = (noise(3, 4, 5, seed), noise(3, 4, 5, seed ^ 1));
        let (m, s) = error_maps(&y, &x).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let e = ((0..3).map(|k| (y.get(k, i, j) - x.get(k, i, j)).powi(2)).sum::<f64>() / 3.0).sqrt();
                prop_assert!((m.get(0, i, j) - e).abs() < 1e-14);
            }
        }
        for k in 0..3 {
            let mut acc = 0.0;
            for i in 0..4 { for j in 0..5 { acc += (y.get(k, i, j) - x.get(k, i, j)).powi(2); } }
            prop_assert!((s[k] - (acc / 20.0).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn metrics_are_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
        let x = noise(8, 16, 16, seed);
        let y = x.zip_map(&noise(8, 16, 16, seed ^ 7), |a, b| a + 0.5 * b).unwrap();
        let a = metrics(&y, &x).unwrap();
        let b = metrics(&y.map(|v| v * c), &x.map(|v| v * c)).unwrap();
        prop_assert!((a.mu_rmse_score - b.mu_rmse_score).abs() < 1e-12);
        prop_assert!((a.sigma_rmse_score - b.sigma_rmse_score).abs() < 1e-12);
        prop_assert!((a.lambda_x - b.lambda_x).abs() < 1e-9);
        prop_assert!((a.lambda_t - b.lambda_t).abs() < 1e-9);
    }

    #[test]
    fn scores_are_bounded_above(seed in any::<u64>()) {
        let x = noise(6, 8, 8, seed);
        let y = noise(6, 8, 8, seed ^ 3);
        let s = rmse_score_series(&y, &x).unwrap();
        prop_assert!(s.per_day.iter().all(|v| *v <= 1.0));
        prop_assert!(s.sigma >= 0.0);
        let p = psd_resolved_scales(&y, &x).unwrap();
        prop_assert!(p.lambda_x >= 0.2 - 1e-12 && p.lambda_x <= 0.8 + 1e-12);
    }
}
