use autograd::{finite_diff_gradient, grad, max_rel_error, Conv2dSpec, Tensor};
use proptest::prelude::*;

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| Tensor::new(v, shape).unwrap())
}

/// Circular shift of the last two axes by (dy, dx).
fn roll(t: &Tensor, dy: usize, dx: usize) -> Tensor {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let mut out = vec![0.0; t.numel()];
    for (p, plane) in t.data().chunks(h * w).enumerate() {
        for i in 0..h {
            for j in 0..w {
                out[p * h * w + ((i + dy) % h) * w + (j + dx) % w] = plane[i * w + j];
            }
        }
    }
    Tensor::new(out, s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_backward_matches_fd(x in tensor(&[1, 2, 5, 5]), k in tensor(&[2, 2, 3, 3])) {
        let f = |z: &Tensor| z.conv2d(&k, Conv2dSpec::same(3))?.tanh().sum().item();
        let xv = x.to_var();
        let g = grad(&xv.conv2d(&k, Conv2dSpec::same(3)).unwrap().tanh().sum(), &[&xv], false).unwrap();
        let fd = finite_diff_gradient(f, &x, 1e-5).unwrap();
        prop_assert!(max_rel_error(g[0].data(), fd.data(), 1e-8) < 1e-5);
    }

    #[test]
    fn elementwise_backward_matches_fd(x in tensor(&[12])) {
        let f = |z: &Tensor| z.sigmoid().mul(&z.tanh())?.add(&z.square())?.sum().item();
        let xv = x.to_var();
        let y = xv.sigmoid().mul(&xv.tanh()).unwrap().add(&xv.square()).unwrap().sum();
        let g = grad(&y, &[&xv], false).unwrap();
        let fd = finite_diff_gradient(f, &x, 1e-5).unwrap();
        prop_assert!(max_rel_error(g[0].data(), fd.data(), 1e-8) < 1e-5);
    }

    #[test]
    fn fd_of_linear_is_exactly_its_weights(x in tensor(&[6]), w in tensor(&[6])) {
        let fd = finite_diff_gradient(|z| z.mul(&w)?.sum().item(), &x, 1e-5).unwrap();
        prop_assert!(max_rel_error(fd.data(), w.data(), 1.0) < 1e-9);
    }

    #[test]
    fn circular_conv_commutes_with_shift(
        x in tensor(&[1, 2, 6, 7]), k in tensor(&[3, 2, 3, 3]), dy in 0usize..6, dx in 0usize..7
    ) {
        let spec = Conv2dSpec::same(3);
        let a = roll(&x, dy, dx).conv2d(&k, spec).unwrap();
        let b = roll(&x.conv2d(&k, spec).unwrap(), dy, dx);
        prop_assert!(max_rel_error(a.data(), b.data(), 1.0) < 1e-13);
    }

    #[test]
    fn grad_stencils_commute_with_shift(x in tensor(&[1, 1, 5, 6]), dy in 0usize..5, dx in 0usize..6) {
        let a = roll(&x, dy, dx).grad_x().unwrap().add(&roll(&x, dy, dx).grad_y().unwrap()).unwrap();
        let b = roll(&x.grad_x().unwrap().add(&x.grad_y().unwrap()).unwrap(), dy, dx);
        prop_assert!(max_rel_error(a.data(), b.data(), 1.0) < 1e-14);
    }
}

#[test]
fn evaluation_is_bit_deterministic() {
    let run = || {
        let x = Tensor::var((0..48).map(|i| (i as f64 * 0.37).sin()).collect(), &[1, 3, 4, 4]).unwrap();
        let k = Tensor::var((0..54).map(|i| (i as f64 * 0.11).cos()).collect(), &[2, 3, 3, 3]).unwrap();
        let y = x.conv2d(&k, Conv2dSpec::same(3)).unwrap().tanh().upsample2().unwrap().square().mean();
        let g = grad(&y, &[&x, &k], true).unwrap();
        let h = grad(&g[0].sum(), &[&k], false).unwrap();
        (y.to_vec(), g[1].to_vec(), h[0].to_vec())
    };
    let (a, b) = (run(), run());
    let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
    assert_eq!(bits(&a.2), bits(&b.2));
}
