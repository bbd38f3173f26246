use crate::error::Result;
use crate::tensor::Tensor;

/// Central-difference estimate of the gradient of a scalar function.
///
/// `f` is evaluated on constant tensors; it must be pure.
pub fn finite_diff_gradient<F>(f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let base = x.to_vec();
    let mut grad = vec![0.0; base.len()];
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + step;
        let up = f(&Tensor::new(probe.clone(), x.shape())?)?;
        probe[i] = base[i] - step;
        let down = f(&Tensor::new(probe.clone(), x.shape())?)?;
        probe[i] = base[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    Tensor::new(grad, x.shape())
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}
