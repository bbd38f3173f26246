use autograd::{finite_diff_gradient, grad, max_rel_error, Tensor};
use dvarnet::prior::{variational_cost, CostContext, CostWeights, FnPrior, NeuralPrior, Padding, Prior, PriorConfig};
use dvarnet::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

fn random_mask(shape: &[usize], p: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect(), shape).unwrap()
}

fn small_config() -> PriorConfig {
    PriorConfig { hidden: 4, bilinear: 2, kernel: 3, blocks: 2, padding: Padding::Circular }
}

/// Prior with every weight drawn at random, including the output layer.
fn random_prior(cfg: &PriorConfig, channels: usize, scale: f64, seed: u64) -> NeuralPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NeuralPrior::new(cfg, channels, &mut rng).unwrap();
    let flat: Vec<f64> = (0..p.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
    p.params.set_flat(&flat).unwrap();
    p
}

#[test]
fn zero_weights_are_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = NeuralPrior::zeros(&PriorConfig::default(), 21).unwrap();
    let x = random(&[2, 21, 8, 8], &mut rng);
    assert_eq!(p.apply(&x).unwrap().to_vec(), x.to_vec());
}

#[test]
fn fresh_prior_is_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = NeuralPrior::new(&PriorConfig::default(), 21, &mut rng).unwrap();
    let x = random(&[1, 21, 8, 8], &mut rng);
    assert_eq!(p.apply(&x).unwrap().to_vec(), x.to_vec());
}

#[test]
fn parameter_count_formula() {
    for (cfg, c) in [(PriorConfig::default(), 21), (small_config(), 6), (PriorConfig { hidden: 96, bilinear: 48, ..PriorConfig::default() }, 21)] {
        let p = NeuralPrior::zeros(&cfg, c).unwrap();
        let (h, m, k) = (cfg.hidden, cfg.bilinear, cfg.kernel);
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let unit = conv(h, 2 * m, k) + conv(h, m, k) + conv(2 * m, h, 1);
        let expected = 2 * (conv(c, h, k) + cfg.blocks * unit) + conv(h, c, 1);
        assert_eq!(p.param_count(), expected);
        assert_eq!(cfg.param_count(c), expected);
    }
    let desk = PriorConfig::default().param_count(21);
    assert!((15_000..30_000).contains(&desk), "{desk}");
}

#[test]
fn output_channels_match_state() {
    let p = NeuralPrior::zeros(&small_config(), 9).unwrap();
    let layout = p.params.layout();
    let (name, shape) = layout.iter().rev().find(|(n, _)| n.ends_with("weight")).unwrap();
    assert!(name.starts_with("out"));
    assert_eq!(shape[0], 9);
    assert!(layout.iter().filter(|(n, _)| n.ends_with("weight")).all(|(_, s)| s[2] == s[3] && s[2] % 2 == 1));
}

#[test]
fn channel_mismatch_is_an_error() {
    let p = NeuralPrior::zeros(&small_config(), 6).unwrap();
    let x = Tensor::zeros(&[1, 5, 4, 4]).unwrap();
    assert!(matches!(p.apply(&x), Err(Error::Shape { .. })));
    let odd = Tensor::zeros(&[1, 6, 5, 4]).unwrap();
    assert!(p.apply(&odd).is_err());
}

#[test]
fn even_kernel_rejected() {
    let cfg = PriorConfig { kernel: 4, ..PriorConfig::default() };
    assert!(NeuralPrior::zeros(&cfg, 3).is_err());
}

fn circ_up(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n];
    for m in 0..n {
        let prev = v[(m + n - 1) % n];
        let next = v[(m + 1) % n];
        out[2 * m] = 0.75 * v[m] + 0.25 * prev;
        out[2 * m + 1] = 0.75 * v[m] + 0.25 * next;
    }
    out
}

#[test]
fn hand_set_one_by_one_kernels() {
    let cfg = PriorConfig { hidden: 1, bilinear: 1, kernel: 1, blocks: 1, padding: Padding::Circular };
    let mut p = NeuralPrior::zeros(&cfg, 1).unwrap();
    let names: Vec<String> = p.params.names().to_vec();
    // Per path: input w,b; linear w(2),b(2); gated w,b; mix w(2),b; then out w,b.
    let path = |s: f64| vec![vec![0.8 * s], vec![0.1], vec![0.5, -0.7 * s], vec![0.2, 0.3], vec![1.5], vec![-0.2 * s], vec![0.6, 0.9], vec![0.05]];
    let mut values = path(1.0);
    values.extend(path(-1.3));
    values.push(vec![0.4]);
    values.push(vec![-0.1]);
    assert_eq!(names.len(), values.len());
    p.params.set_values(values).unwrap();

    let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 11) as f64 / 10.0 - 0.4).collect();
    let unit = |v: f64, s: f64| {
        let z = 0.8 * s * v + 0.1;
        let a1 = 0.5 * z + 0.2;
        let a2 = -0.7 * s * z + 0.3;
        let b = (1.5 * z - 0.2 * s).max(0.0);
        z + 0.6 * a1 + 0.9 * a2 * b + 0.05
    };
    let fine: Vec<f64> = x.iter().map(|&v| unit(v, 1.0)).collect();
    let mut pooled = vec![0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            pooled[i * 2 + j] = 0.25 * (x[2 * i * 4 + 2 * j] + x[2 * i * 4 + 2 * j + 1] + x[(2 * i + 1) * 4 + 2 * j] + x[(2 * i + 1) * 4 + 2 * j + 1]);
        }
    }
    let coarse: Vec<f64> = pooled.iter().map(|&v| unit(v, -1.3)).collect();
    let rows: Vec<Vec<f64>> = (0..2).map(|i| circ_up(&coarse[i * 2..i * 2 + 2], 2)).collect();
    let mut up = vec![0.0; 16];
    for j in 0..4 {
        let col = circ_up(&[rows[0][j], rows[1][j]], 2);
        for i in 0..4 {
            up[i * 4 + j] = col[i];
        }
    }
    let expected: Vec<f64> = (0..16).map(|c| x[c] + 0.4 * (fine[c] + up[c]) - 0.1).collect();
    let out = p.apply(&Tensor::new(x, &[1, 1, 4, 4]).unwrap()).unwrap();
    assert!(max_rel_error(out.data(), &expected, 1.0) < 1e-14, "{:?} vs {expected:?}", out.data());
}

#[test]
fn zero_padding_variant_runs() {
    let cfg = PriorConfig { padding: Padding::Zero, ..small_config() };
    let p = random_prior(&cfg, 3, 0.3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = p.apply(&random(&[1, 3, 6, 6], &mut rng)).unwrap();
    assert_eq!(y.shape(), &[1, 3, 6, 6]);
}

#[test]
fn cost_zero_at_fixed_point_matching_obs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[1, 3, 4, 4], &mut rng);
    let mask = random_mask(&[1, 3, 4, 4], 0.5, &mut rng);
    let id = FnPrior(|t: &Tensor| Ok(t.clone()));
    let c = variational_cost(&x, &x, &mask, CostWeights::default(), &id).unwrap();
    assert_eq!(c.item().unwrap(), 0.0);
}

#[test]
fn cost_single_cell() {
    let x = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
    let y = Tensor::new(vec![1.0, 5.0, 5.0, 5.0], &[1, 1, 2, 2]).unwrap();
    let m = Tensor::new(vec![1.0, 0.0, 0.0, 0.0], &[1, 1, 2, 2]).unwrap();
    let id = FnPrior(|t: &Tensor| Ok(t.clone()));
    let w = CostWeights { lambda_obs: 1.0, lambda_prior: 0.0 };
    assert_eq!(variational_cost(&x, &y, &m, w, &id).unwrap().item().unwrap(), 1.0);
}

#[test]
fn empty_mask_without_prior_weight_is_degenerate() {
    let x = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
    let w = CostWeights { lambda_obs: 1.0, lambda_prior: 0.0 };
    let id = FnPrior(|t: &Tensor| Ok(t.clone()));
    assert!(variational_cost(&x, &x, &x, w, &id).is_err());
    assert!(CostWeights { lambda_obs: 0.0, lambda_prior: 0.0 }.validate().is_err());
    assert!(CostWeights { lambda_obs: -1.0, lambda_prior: 1.0 }.validate().is_err());
}

fn cost_oracle(x: &[f64], y: &[f64], m: &[f64], phi: &[f64], per: usize, w: CostWeights) -> f64 {
    let mut total = 0.0;
    for b in 0..x.len() / per {
        let r = b * per..(b + 1) * per;
        let count = m[r.clone()].iter().filter(|&&v| v != 0.0).count();
        let obs: f64 = r.clone().filter(|&i| m[i] != 0.0).map(|i| (y[i] - x[i]).powi(2)).sum();
        let prior: f64 = r.map(|i| (x[i] - phi[i]).powi(2)).sum::<f64>() / per as f64;
        total += w.lambda_obs * if count > 0 { obs / count as f64 } else { 0.0 } + w.lambda_prior * prior;
    }
    total
}

#[test]
fn cost_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [2, 6, 4, 4];
    let p = random_prior(&small_config(), 6, 0.4, 8);
    let x = random(&shape, &mut rng);
    let y = random(&shape, &mut rng);
    let m = random_mask(&shape, 0.3, &mut rng);
    let w = CostWeights { lambda_obs: 0.7, lambda_prior: 1.3 };
    let phi = p.apply(&x).unwrap();
    let c = variational_cost(&x, &y, &m, w, &p).unwrap().item().unwrap();
    let e = cost_oracle(x.data(), y.data(), m.data(), phi.data(), 96, w);
    assert!((c - e).abs() < 1e-13 * e.abs().max(1.0), "{c} vs {e}");
}

#[test]
fn cost_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shape = [1, 3, 4, 4];
    let p = random_prior(&small_config(), 3, 0.5, 10);
    let y = random(&shape, &mut rng);
    let m = random_mask(&shape, 0.4, &mut rng);
    let ctx = CostContext::new(y, m, CostWeights::default()).unwrap();
    let x = random(&shape, &mut rng).to_var();
    let g = grad(&ctx.cost(&x, &p).unwrap(), &[&x], false).unwrap().remove(0);
    let fd = finite_diff_gradient(|t| Ok(ctx.cost(t, &p).map_err(|_| autograd::Error::NoGraph)?.item()?), &x, 1e-5).unwrap();
    let err = max_rel_error(g.data(), fd.data(), 1e-8);
    assert!(err < 1e-5, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cost_is_nonnegative(seed in any::<u64>(), lo in 0.0f64..2.0, lp in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [2, 3, 4, 4];
        let p = random_prior(&small_config(), 3, 0.5, seed ^ 1);
        let c = variational_cost(&random(&shape, &mut rng), &random(&shape, &mut rng), &random_mask(&shape, 0.3, &mut rng),
            CostWeights { lambda_obs: lo, lambda_prior: lp }, &p).unwrap();
        prop_assert!(c.item().unwrap() >= 0.0);
    }

    #[test]
    fn without_prior_term_cost_ignores_unobserved_cells(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [1, 3, 4, 4];
        let y = random(&shape, &mut rng);
        let m = random_mask(&shape, 0.5, &mut rng);
        prop_assume!(m.data().iter().any(|&v| v != 0.0));
        let w = CostWeights { lambda_obs: 1.0, lambda_prior: 0.0 };
        let id = FnPrior(|t: &Tensor| Ok(t.clone()));
        let x = random(&shape, &mut rng);
        let x2: Vec<f64> = x.data().iter().zip(m.data()).map(|(&v, &mk)| if mk == 0.0 { v + rng.random_range(-5.0..5.0) } else { v }).collect();
        let a = variational_cost(&x, &y, &m, w, &id).unwrap().item().unwrap();
        let b = variational_cost(&Tensor::new(x2, &shape).unwrap(), &y, &m, w, &id).unwrap().item().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn circular_prior_commutes_with_even_shifts(seed in any::<u64>(), dy in 0usize..4, dx in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_prior(&small_config(), 3, 0.4, seed);
        let (h, w) = (8, 8);
        let x = random(&[1, 3, h, w], &mut rng);
        let roll = |t: &Tensor| {
            let mut out = vec![0.0; t.numel()];
            for c in 0..3 {
                for i in 0..h {
                    for j in 0..w {
                        out[c * h * w + ((i + 2 * dy) % h) * w + (j + 2 * dx) % w] = t.data()[c * h * w + i * w + j];
                    }
                }
            }
            Tensor::new(out, t.shape()).unwrap()
        };
        let a = roll(&p.apply(&x).unwrap());
        let b = p.apply(&roll(&x)).unwrap();
        prop_assert!(max_rel_error(a.data(), b.data(), 1.0) < 1e-12);
    }
}
