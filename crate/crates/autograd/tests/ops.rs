use autograd::{finite_diff_gradient, grad, Conv2dSpec, Error, PaddingMode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

#[test]
fn add_elementwise() {
    let a = Tensor::new(vec![1.0, 2.0], &[2]).unwrap();
    let b = Tensor::new(vec![3.0, 4.0], &[2]).unwrap();
    assert_eq!(a.add(&b).unwrap().to_vec(), vec![4.0, 6.0]);
}

#[test]
fn identity_kernel_conv() {
    let x = Tensor::ones(&[1, 1, 3, 3]).unwrap();
    let k = Tensor::ones(&[1, 1, 1, 1]).unwrap();
    let y = x.conv2d(&k, Conv2dSpec::same(1)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);
    let c = a.matmul(&b).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..4 {
                s += a.data()[i * 4 + k] * b.data()[k * 2 + j];
            }
            assert!((c.data()[i * 2 + j] - s).abs() < 1e-14);
        }
    }
}

/// Direct loop convolution used as an oracle.
fn conv_oracle(x: &Tensor, k: &Tensor, spec: Conv2dSpec) -> Vec<f64> {
    let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, ks) = (k.shape()[0], k.shape()[2]);
    let ho = spec.output_len(h, ks).unwrap();
    let wo = spec.output_len(w, ks).unwrap();
    let mut out = vec![0.0; n * cout * ho * wo];
    let p = spec.padding as isize;
    for b in 0..n {
        for o in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut s = 0.0;
                    for c in 0..cin {
                        for di in 0..ks {
                            for dj in 0..ks {
                                let mut yi = (i * spec.stride + di) as isize - p;
                                let mut xj = (j * spec.stride + dj) as isize - p;
                                match spec.mode {
                                    PaddingMode::Circular => {
                                        yi = yi.rem_euclid(h as isize);
                                        xj = xj.rem_euclid(w as isize);
                                    }
                                    PaddingMode::Zero => {
                                        if yi < 0 || xj < 0 || yi >= h as isize || xj >= w as isize {
                                            continue;
                                        }
                                    }
                                }
                                s += x.data()[((b * cin + c) * h + yi as usize) * w + xj as usize]
                                    * k.data()[((o * cin + c) * ks + di) * ks + dj];
                            }
                        }
                    }
                    out[((b * cout + o) * ho + i) * wo + j] = s;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&mut rng, &[2, 3, 7, 5]);
    for (ks, spec) in [
        (3, Conv2dSpec::same(3)),
        (3, Conv2dSpec::same(3).with_mode(PaddingMode::Zero)),
        (3, Conv2dSpec::same(3).with_stride(2)),
        (5, Conv2dSpec::same(5).with_mode(PaddingMode::Zero).with_stride(2)),
        (1, Conv2dSpec::same(1)),
    ] {
        let k = random(&mut rng, &[4, 3, ks, ks]);
        let y = x.conv2d(&k, spec).unwrap();
        let want = conv_oracle(&x, &k, spec);
        assert_eq!(y.numel(), want.len());
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{spec:?}");
        }
    }
}

#[test]
fn shape_mismatch_names_op_and_shapes() {
    let a = Tensor::zeros(&[2, 3]).unwrap();
    let b = Tensor::zeros(&[3, 2]).unwrap();
    let err = a.add(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    assert!(a.matmul(&a).is_err());
    let k = Tensor::zeros(&[1, 4, 3, 3]).unwrap();
    assert!(Tensor::zeros(&[1, 2, 4, 4]).unwrap().conv2d(&k, Conv2dSpec::same(3)).is_err());
}

#[test]
fn invalid_shapes_rejected() {
    assert!(Tensor::new(vec![1.0; 5], &[2, 3]).is_err());
    assert!(Tensor::new(vec![], &[0]).is_err());
}

#[test]
fn constant_ops_record_no_graph() {
    let a = Tensor::ones(&[3]).unwrap();
    let y = a.tanh().add(&a).unwrap();
    assert!(!y.requires_grad());
    assert!(y.op_name().is_none());
    let v = a.to_var();
    assert_eq!(v.tanh().op_name(), Some("tanh"));
}

#[test]
fn square_sum_gradients() {
    let x = Tensor::var(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let f = x.square().sum();
    let store = f.backward(false).unwrap();
    assert_eq!(store.get(&x).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);

    let g = grad(&f, &[&x], true).unwrap().remove(0);
    assert!(g.requires_grad());
    let h = grad(&g.sum(), &[&x], false).unwrap().remove(0);
    assert_eq!(h.to_vec(), vec![2.0, 2.0, 2.0]);
}

#[test]
fn second_backward_without_create_graph_errors() {
    let x = Tensor::var(vec![1.0, 2.0], &[2]).unwrap();
    let g = grad(&x.square().sum(), &[&x], false).unwrap().remove(0);
    assert!(!g.requires_grad());
    assert!(matches!(grad(&g.sum(), &[&x], false), Err(Error::NoGraph)));
    assert!(matches!(g.sum().backward(false), Err(Error::NoGraph)));
}

#[test]
fn non_scalar_loss_errors() {
    let x = Tensor::var(vec![1.0, 2.0], &[2]).unwrap();
    assert!(matches!(x.square().backward(false), Err(Error::NonScalarLoss(_))));
}

#[test]
fn grad_wrt_intermediate_and_unused() {
    let x = Tensor::var(vec![0.5, -1.0], &[2]).unwrap();
    let u = Tensor::var(vec![3.0], &[1]).unwrap();
    let y = x.scale(3.0);
    let f = y.square().sum();
    let gs = grad(&f, &[&y, &u, &x], false).unwrap();
    assert_eq!(gs[0].to_vec(), vec![3.0, -6.0]);
    assert_eq!(gs[1].to_vec(), vec![0.0]);
    assert_eq!(gs[2].to_vec(), vec![0.0, 0.0], "paths through a target are cut");
}

#[test]
fn finite_diff_examples() {
    let x = Tensor::new(vec![0.3, -2.0, 5.0], &[3]).unwrap();
    let g = finite_diff_gradient(|t| t.sum().item(), &x, 1e-5).unwrap();
    for v in g.data() {
        assert!((v - 1.0).abs() < 1e-9);
    }
    let one = Tensor::new(vec![1.0], &[1]).unwrap();
    let g = finite_diff_gradient(|t| t.square().sum().item(), &one, 1e-5).unwrap();
    assert!((g.data()[0] - 2.0).abs() < 1e-8);
}

#[test]
fn masked_mean_of_empty_mask_is_zero() {
    let x = Tensor::var(vec![1.0, 2.0], &[2]).unwrap();
    let m = Tensor::zeros(&[2]).unwrap();
    let f = x.masked_mean(&m).unwrap().add(&x.sum()).unwrap();
    assert_eq!(f.item().unwrap(), 3.0);
    let g = grad(&f, &[&x], false).unwrap().remove(0);
    assert_eq!(g.to_vec(), vec![1.0, 1.0]);
}

#[test]
fn gradient_shapes_match_parents() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[2, 3, 4, 4]).to_var();
    let k = random(&mut rng, &[5, 3, 3, 3]).to_var();
    let f = x.conv2d(&k, Conv2dSpec::same(3)).unwrap().avg_pool2().unwrap().square().sum();
    let gs = grad(&f, &[&x, &k], false).unwrap();
    assert_eq!(gs[0].shape(), x.shape());
    assert_eq!(gs[1].shape(), k.shape());
}
