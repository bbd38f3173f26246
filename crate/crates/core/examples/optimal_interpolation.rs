//! Grids sparse along-track observations with optimal interpolation and
//! scores the result against the truth.

use dvarnet::eval::metrics;
use dvarnet::osse::{optimal_interp, sample_all, simulate_truth, OiConfig, RegimeConfig, SamplingConfig};
use dvarnet::Grid;

fn main() -> dvarnet::Result<()> {
    let truth = simulate_truth(20, 32, 32, Grid::default(), &RegimeConfig::energetic(), 5)?;
    let (_, _, obs) = sample_all(&truth, &SamplingConfig::default(), 6)?;
    println!("{} observations", obs.count());
    let inner = |f: &dvarnet::FieldSeq| f.slice_t(4, 12);
    for lt in [1.0, 3.0, 6.0] {
        let cfg = OiConfig { lt, ..OiConfig::default() };
        let oi = optimal_interp(&obs, &cfg)?;
        let m = metrics(&inner(&oi)?, &inner(&truth)?)?;
        println!("lt {lt:>3} d: mu {:.4}  lambda_x {:.3} deg  lambda_t {:.2} d", m.mu_rmse_score, m.lambda_x, m.lambda_t);
    }
    Ok(())
}
