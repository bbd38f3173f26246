//! Effective resolution of progressively smoothed copies of a field.

use dvarnet::eval::{metrics, psd_resolved_scales};
use dvarnet::osse::{simulate_truth, RegimeConfig};
use dvarnet::{FieldSeq, Grid};

/// Box average over `(2r+1)²` cells, periodic.
fn smooth(f: &FieldSeq, r: usize) -> FieldSeq {
    let (t, h, w) = f.dims();
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    FieldSeq::from_fn(t, h, w, f.grid, |k, i, j| {
        let mut s = 0.0;
        for di in 0..=2 * r {
            for dj in 0..=2 * r {
                s += f.get(k, (i + h + di - r) % h, (j + w + dj - r) % w);
            }
        }
        s / n
    })
}

fn main() -> dvarnet::Result<()> {
    let truth = simulate_truth(16, 64, 64, Grid::default(), &RegimeConfig::energetic(), 3)?;
    println!("{:>6} {:>8} {:>10} {:>10}", "radius", "mu", "lambda_x", "lambda_t");
    for r in [0, 1, 2, 4] {
        let f = smooth(&truth, r);
        let m = metrics(&f, &truth)?;
        println!("{r:>6} {:>8.4} {:>10.3} {:>10.2}", m.mu_rmse_score, m.lambda_x, m.lambda_t);
    }
    let scales = psd_resolved_scales(&smooth(&truth, 2), &truth)?;
    println!("\nisotropic score for radius 2:");
    for (k, s) in scales.score_x.iter().enumerate().take(12) {
        println!("  wavelength {:>7.3} deg  score {:.3}", scales.grid.wavelength_x[k], s);
    }
    Ok(())
}
