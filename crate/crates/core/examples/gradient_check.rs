//! Reverse-mode first and second derivatives checked against central
//! differences on the built-in graph catalogue.

use autograd::zoo::{check_case, random_cases};
use autograd::{grad, Tensor};

fn main() -> autograd::Result<()> {
    // Hessian-vector product of f(x) = sum tanh(x)² by differentiating twice.
    let x = Tensor::var(vec![0.3, -0.7, 1.1], &[3])?;
    let f = x.tanh().square().sum();
    let g = grad(&f, &[&x], true)?.remove(0);
    let v = Tensor::new(vec![1.0, 0.0, 0.0], &[3])?;
    let hv = grad(&g.mul(&v)?.sum(), &[&x], false)?.remove(0);
    println!("f = {:.6}", f.item()?);
    println!("grad = {:?}", g.to_vec());
    println!("H e1 = {:?}", hv.to_vec());

    let cases = random_cases(7, 10);
    println!("\n{:<28} {:>12} {:>12}", "graph", "1st order", "2nd order");
    for (i, case) in cases.iter().enumerate() {
        let r = check_case(case, 1e-5, i as u64)?;
        println!("{:<28} {:>12.2e} {:>12.2e}", case.name, r.first_order, r.second_order);
    }
    Ok(())
}
