//! Trains a small ensemble that differs only in initialization and checks
//! whether the member spread tracks the reconstruction error.

use dvarnet::config::{DomainConfig, ExperimentConfig, Period, Periods};
use dvarnet::pipeline::{cmd_ensemble, cmd_generate};

fn main() -> dvarnet::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.domain = DomainConfig { t: 32, h: 32, w: 32, ..DomainConfig::default() };
    cfg.periods = Periods { test: Period::days(2, 11), val: Period::days(13, 18), train: Period::days(20, 31) };
    cfg.train.epochs = 2;
    cfg.oi.max_obs = None;
    cfg.ensemble.seeds = vec![11, 12, 13];

    let root = std::env::temp_dir().join("dvarnet_ensemble_uq");
    cmd_generate(&cfg, &root.join("dataset"))?;
    let (manifest, run) = cmd_ensemble(&cfg, &root.join("dataset"), &root.join("ensemble"))?;
    println!("members: {}", run.members.len());
    println!("median: mu {:.4}  lambda_x {:.3} deg", manifest.median.mu_rmse_score, manifest.median.lambda_x);
    println!("oi:     mu {:.4}  lambda_x {:.3} deg", manifest.oi.mu_rmse_score, manifest.oi.lambda_x);
    println!("R2(std, |error|): pointwise {:.3}, daily-averaged {:.3}", run.uq.r2_pointwise, run.uq.r2_time_mean);
    Ok(())
}
