//! The full command sequence on a small domain: write a config, generate a
//! dataset, train, evaluate, and print the report table.

use dvarnet::config::{DomainConfig, ExperimentConfig, Period, Periods};
use dvarnet::pipeline::{cmd_eval, cmd_generate, cmd_report, cmd_train, EvalRequest};

fn main() -> dvarnet::Result<()> {
    let root = std::env::temp_dir().join("dvarnet_experiment");
    let mut cfg = ExperimentConfig::default();
    cfg.domain = DomainConfig { t: 32, h: 32, w: 32, ..DomainConfig::default() };
    cfg.periods = Periods { test: Period::days(2, 11), val: Period::days(13, 18), train: Period::days(20, 31) };
    cfg.train.epochs = 2;
    cfg.oi.max_obs = None;
    dvarnet::io::write_json(&root.join("config.json"), &cfg)?;

    let manifest = cmd_generate(&cfg, &root.join("dataset"))?;
    println!("dataset: {} observations", manifest.obs_count);
    let fit = cmd_train(&cfg, &root.join("dataset"), &root.join("train"))?;
    println!("trained {} epochs, best {}", fit.log.len(), fit.best_epoch);
    cmd_eval(&EvalRequest::new(&root.join("train"), &root.join("dataset"), &cfg), &root.join("eval"))?;
    println!("{}", cmd_report(&[root.join("eval")])?);
    println!("outputs in {}", root.display());
    Ok(())
}
