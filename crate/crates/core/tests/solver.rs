use autograd::{max_rel_error, Conv2dSpec, Tensor};
use dvarnet::prior::{CostContext, CostWeights, FnPrior, NeuralPrior, Padding, Prior, PriorConfig};
use dvarnet::solver::{fixed_point_solve, fixed_point_solve_with, GradSolver, Mode, SolverConfig, SolverState};
use nalgebra::{DMatrix, DVector};
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

fn identity() -> FnPrior<impl Fn(&Tensor) -> dvarnet::Result<Tensor>> {
    FnPrior(|t: &Tensor| Ok(t.clone()))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[test]
fn zero_weight_solver_returns_initial_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = [2, 9, 4, 4];
    let solver = GradSolver::zeros(&SolverConfig::default(), 9).unwrap();
    let prior = NeuralPrior::new(&PriorConfig::default(), 9, &mut rng).unwrap();
    let ctx = CostContext::new(random(&shape, &mut rng), random_mask(&shape, 0.3, &mut rng), CostWeights::default()).unwrap();
    let x0 = random(&shape, &mut rng);
    for mode in [Mode::Infer, Mode::Train] {
        for n in [1, 5] {
            let out = solver.solve(&x0, &ctx, &prior, n, mode).unwrap();
            assert_eq!(out.x.to_vec(), x0.to_vec());
            assert_eq!(out.trace.len(), n);
        }
    }
    let g = random(&shape, &mut rng);
    let (x1, s1) = solver.grad_step(&x0, &g, &SolverState::zeros(2, 32, 4, 4).unwrap()).unwrap();
    assert_eq!(x1.to_vec(), x0.to_vec());
    assert!(s1.h.data().iter().chain(s1.c.data()).all(|&v| v == 0.0));
    assert_eq!(s1.iteration, 1);
}

#[test]
fn zero_iterations_rejected() {
    let shape = [1, 3, 2, 2];
    let solver = GradSolver::zeros(&SolverConfig::default(), 3).unwrap();
    let ctx = CostContext::new(Tensor::zeros(&shape).unwrap(), Tensor::ones(&shape).unwrap(), CostWeights::default()).unwrap();
    assert!(solver.solve(&Tensor::zeros(&shape).unwrap(), &ctx, &identity(), 0, Mode::Infer).is_err());
    assert!(SolverConfig { n_iter: 0, ..SolverConfig::default() }.validate().is_err());
    assert_eq!(SolverConfig::default().n_iter, 5);
}

#[test]
fn parameter_count_and_shapes() {
    let cfg = SolverConfig::default();
    let s = GradSolver::zeros(&cfg, 21).unwrap();
    assert_eq!(s.params.numel(), cfg.param_count(21));
    let layout = s.params.layout();
    assert_eq!(layout[0].1, vec![4 * 32, 21 + 32, 3, 3]);
    assert_eq!(layout.last().unwrap().1, vec![21, 32, 1, 1]);
}

/// Scalar conv-LSTM with 1x1 kernels: weights `[4 gates][grad, h]`.
fn scalar_solver(w: [[f64; 2]; 4], b: [f64; 4], t: f64) -> GradSolver {
    let cfg = SolverConfig { hidden: 1, kernel: 1, n_iter: 1, padding: Padding::Circular };
    let mut s = GradSolver::zeros(&cfg, 1).unwrap();
    s.params.set_values(vec![w.iter().flatten().copied().collect(), b.to_vec(), vec![t]]).unwrap();
    s
}

#[test]
fn scalar_recurrence_matches_hand_run_lstm() {
    let w = [[0.7, -0.3], [0.2, 0.9], [-0.5, 0.4], [1.1, 0.6]];
    let b = [0.1, -0.2, 0.3, 0.05];
    let t = 0.8;
    let solver = scalar_solver(w, b, t);
    let mut x = Tensor::new(vec![0.4], &[1, 1, 1, 1]).unwrap();
    let mut st = SolverState::zeros(1, 1, 1, 1).unwrap();
    let (mut xh, mut hh, mut ch) = (0.4f64, 0.0f64, 0.0f64);
    for k in 0..6 {
        let gval = (k as f64 * 0.7).sin();
        let g = Tensor::new(vec![gval], &[1, 1, 1, 1]).unwrap();
        let (nx, ns) = solver.grad_step(&x, &g, &st).unwrap();
        // alpha = C·H·W = 1
        let z: Vec<f64> = (0..4).map(|q| w[q][0] * gval + w[q][1] * hh + b[q]).collect();
        let (i, f, o, gg) = (sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]), z[3].tanh());
        ch = f * ch + i * gg;
        hh = o * ch.tanh();
        xh -= t * hh;
        assert!((nx.data()[0] - xh).abs() < 1e-15, "step {k}: {} vs {xh}", nx.data()[0]);
        assert!((ns.c.data()[0] - ch).abs() < 1e-15 && (ns.h.data()[0] - hh).abs() < 1e-15);
        x = nx;
        st = ns;
    }
}

#[test]
fn near_linear_lstm_reproduces_gradient_descent() {
    // J(x) = λ1·mean_Ω (y − x)² + λ2·mean(x²) with Φ = 0.
    let (lo, lp) = (1.0, 0.5);
    let cells = 4;
    let y = vec![1.0, -0.5, 0.25, 2.0];
    let m = vec![1.0, 0.0, 1.0, 1.0];
    let eta = 0.3;
    let eps = 1e-5;
    let alpha = cells as f64;
    let big = 40.0;
    let solver = scalar_solver([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [eps, 0.0]], [big, -big, big, 0.0], eta / (eps * alpha));
    let zero = FnPrior(|t: &Tensor| Ok(t.zeros_like()));
    let shape = [1, 1, 1, cells];
    let ctx = CostContext::new(Tensor::new(y.clone(), &shape).unwrap(), Tensor::new(m.clone(), &shape).unwrap(), CostWeights { lambda_obs: lo, lambda_prior: lp }).unwrap();
    let x0 = vec![0.0, 0.3, -0.2, 0.1];
    let out = solver.solve(&Tensor::new(x0.clone(), &shape).unwrap(), &ctx, &zero, 5, Mode::Infer).unwrap();
    let count = m.iter().filter(|&&v| v != 0.0).count() as f64;
    let mut x = x0;
    let mut trace = Vec::new();
    for _ in 0..5 {
        let j: f64 = (0..cells).map(|c| lo * m[c] * (y[c] - x[c]).powi(2) / count + lp * x[c] * x[c] / cells as f64).sum();
        trace.push(j);
        let g: Vec<f64> = (0..cells).map(|c| -2.0 * lo * m[c] * (y[c] - x[c]) / count + 2.0 * lp * x[c] / cells as f64).collect();
        x = x.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
    }
    assert!(max_rel_error(out.x.data(), &x, 1.0) < 1e-8, "{:?} vs {x:?}", out.x.data());
    assert!(max_rel_error(&out.trace, &trace, 1.0) < 1e-8);
    assert!(trace.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn train_mode_keeps_the_unroll_differentiable() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = [1, 3, 4, 4];
    let cfg = SolverConfig { hidden: 4, ..SolverConfig::default() };
    let solver = GradSolver::new(&cfg, 3, &mut rng).unwrap();
    let prior = NeuralPrior::new(&PriorConfig { hidden: 4, bilinear: 2, ..PriorConfig::default() }, 3, &mut rng).unwrap();
    let ctx = CostContext::new(random(&shape, &mut rng), random_mask(&shape, 0.5, &mut rng), CostWeights::default()).unwrap();
    let x0 = random(&shape, &mut rng);
    let train = solver.solve(&x0, &ctx, &prior, 3, Mode::Train).unwrap();
    let infer = solver.solve(&x0, &ctx, &prior, 3, Mode::Infer).unwrap();
    assert!(train.x.requires_grad());
    assert!(!infer.x.requires_grad());
    assert!(max_rel_error(train.x.data(), infer.x.data(), 1.0) < 1e-14);
    assert!(train.trace.iter().all(|v| v.is_finite()));
    let g = autograd::grad(&train.x.square().sum(), &[solver.params.get(0)], false).unwrap().remove(0);
    assert!(g.data().iter().any(|&v| v != 0.0));
}

#[test]
fn identity_prior_fixed_point_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = [1, 3, 4, 4];
    let x0 = random(&shape, &mut rng);
    let mask = random_mask(&shape, 0.4, &mut rng);
    // Observations consistent with x0 on the mask.
    let out = fixed_point_solve_with(&x0, &x0, &mask, &identity(), 7, |_, x| assert_eq!(x.to_vec(), x0.to_vec())).unwrap();
    assert_eq!(out.to_vec(), x0.to_vec());
    assert!(fixed_point_solve(&x0, &x0, &mask, &identity(), 0).is_err());
}

fn averaging_prior(t: &Tensor) -> dvarnet::Result<Tensor> {
    let k = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0).unwrap();
    Ok(t.conv2d(&k, Conv2dSpec::same(3))?)
}

#[test]
fn linear_averaging_converges_to_direct_solve() {
    let (h, w) = (5, 5);
    let n = h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let obs_cells = [0usize, 7, 12, 18, 21, 24];
    let mut mask = vec![0.0; n];
    let mut y = vec![0.0; n];
    for &c in &obs_cells {
        mask[c] = 1.0;
        y[c] = rng.random_range(-1.0..1.0);
    }
    let shape = [1, 1, h, w];
    let yt = Tensor::new(y.clone(), &shape).unwrap();
    let mt = Tensor::new(mask.clone(), &shape).unwrap();
    let x0 = yt.clone();
    let prior = FnPrior(averaging_prior);
    let x = fixed_point_solve_with(&x0, &yt, &mt, &prior, 2000, |_, x| {
        for &c in &obs_cells {
            assert_eq!(x.data()[c].to_bits(), y[c].to_bits());
        }
    })
    .unwrap();

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..h {
        for j in 0..w {
            for di in [h - 1, 0, 1] {
                for dj in [w - 1, 0, 1] {
                    a[(i * w + j, ((i + di) % h) * w + (j + dj) % w)] += 1.0 / 9.0;
                }
            }
        }
    }
    let gaps: Vec<usize> = (0..n).filter(|c| mask[*c] == 0.0).collect();
    let g = gaps.len();
    let mut lhs = DMatrix::<f64>::identity(g, g);
    let mut rhs = DVector::<f64>::zeros(g);
    for (r, &ci) in gaps.iter().enumerate() {
        for (s, &cj) in gaps.iter().enumerate() {
            lhs[(r, s)] -= a[(ci, cj)];
        }
        for &o in &obs_cells {
            rhs[r] += a[(ci, o)] * y[o];
        }
    }
    let sol = lhs.lu().solve(&rhs).unwrap();
    let dev = gaps.iter().enumerate().map(|(r, &c)| (x.data()[c] - sol[r]).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-8, "{dev}");
}

fn roll(t: &Tensor, dy: usize, dx: usize) -> Tensor {
    let s = t.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let mut out = vec![0.0; t.numel()];
    for p in 0..planes {
        for i in 0..h {
            for j in 0..w {
                out[p * h * w + ((i + dy) % h) * w + (j + dx) % w] = t.data()[p * h * w + i * w + j];
            }
        }
    }
    Tensor::new(out, s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solve_commutes_with_even_circular_shifts(seed in any::<u64>(), dy in 0usize..4, dx in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [1, 6, 8, 8];
        let prior_cfg = PriorConfig { hidden: 4, bilinear: 2, ..PriorConfig::default() };
        let mut prior = NeuralPrior::new(&prior_cfg, 6, &mut rng).unwrap();
        let flat: Vec<f64> = (0..prior.param_count()).map(|_| rng.random_range(-0.3..0.3)).collect();
        prior.params.set_flat(&flat).unwrap();
        let solver = GradSolver::new(&SolverConfig { hidden: 4, ..SolverConfig::default() }, 6, &mut rng).unwrap();
        let y = random(&shape, &mut rng);
        let m = random_mask(&shape, 0.3, &mut rng);
        let x0 = random(&shape, &mut rng);
        let (sy, sx) = (2 * dy, 2 * dx);
        let a = solver.solve(&x0, &CostContext::new(y.clone(), m.clone(), CostWeights::default()).unwrap(), &prior, 3, Mode::Infer).unwrap();
        let b = solver.solve(&roll(&x0, sy, sx), &CostContext::new(roll(&y, sy, sx), roll(&m, sy, sx), CostWeights::default()).unwrap(), &prior, 3, Mode::Infer).unwrap();
        let dev = roll(&a.x, sy, sx).data().iter().zip(b.x.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(dev < 1e-10, "{}", dev);
    }

    #[test]
    fn fixed_point_keeps_observations_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [1, 3, 4, 4];
        let prior = NeuralPrior::new(&PriorConfig { hidden: 4, bilinear: 2, ..PriorConfig::default() }, 3, &mut rng).unwrap();
        let mut p2 = prior.clone();
        let flat: Vec<f64> = (0..p2.param_count()).map(|_| rng.random_range(-0.3..0.3)).collect();
        p2.params.set_flat(&flat).unwrap();
        let y = random(&shape, &mut rng);
        let m = random_mask(&shape, 0.4, &mut rng);
        let x0 = random(&shape, &mut rng);
        let mut ok = true;
        fixed_point_solve_with(&x0, &y, &m, &p2, 5, |_, x| {
            for ((v, yy), mm) in x.data().iter().zip(y.data()).zip(m.data()) {
                if *mm != 0.0 && v.to_bits() != yy.to_bits() { ok = false; }
            }
        }).unwrap();
        prop_assert!(ok);
        let _ = prior.apply(&x0).unwrap();
    }
}
