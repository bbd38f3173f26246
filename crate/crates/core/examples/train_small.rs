//! Trains a small prior and solver on a synthetic dataset and compares the
//! learned reconstruction with the OI background on held-out days.

use std::time::Instant;

use dvarnet::config::{DomainConfig, ExperimentConfig, Period, Periods};
use dvarnet::eval::metrics;
use dvarnet::model::Method;
use dvarnet::pipeline::{train_dataset, Dataset};

fn main() -> dvarnet::Result<()> {
    let epochs = std::env::args().nth(1).map_or(20, |s| s.parse().expect("epoch count"));
    let mut cfg = ExperimentConfig::default();
    cfg.domain = DomainConfig { t: 40, h: 32, w: 32, ..DomainConfig::default() };
    cfg.periods = Periods { test: Period::days(2, 11), val: Period::days(13, 19), train: Period::days(21, 39) };
    cfg.train.epochs = epochs;
    cfg.train.learning_rate = 2e-3;
    cfg.oi.max_obs = None;

    let ds = Dataset::generate(&cfg)?;
    let dir = std::env::temp_dir().join("dvarnet_train_small");
    let start = Instant::now();
    let fit = train_dataset(&cfg, &ds, &dir, |e| {
        println!("epoch {:>2}  loss {:.5}  val mu {:.4}  ({:.0} s)", e.epoch, e.train_loss, e.val_mu_rmse_score, start.elapsed().as_secs_f64())
    })?;

    let days = cfg.periods.test.range(&cfg.domain)?;
    let truth = ds.truth.slice_t(days.start, days.len())?;
    let rec = fit.model.reconstruct(&ds.obs, &ds.oi, days.clone(), Method::Learned, cfg.eval.batch)?;
    let oi = ds.oi.slice_t(days.start, days.len())?;
    for (name, f) in [("oi", &oi), ("learned", &rec)] {
        let m = metrics(f, &truth)?;
        println!("{name:>8}: mu {:.4}  lambda_x {:.3} deg  lambda_t {:.2} d", m.mu_rmse_score, m.lambda_x, m.lambda_t);
    }
    println!("best epoch {}, checkpoint in {}", fit.best_epoch, dir.display());
    Ok(())
}
