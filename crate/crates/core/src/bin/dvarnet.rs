use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvarnet::config::ExperimentConfig;
use dvarnet::pipeline::{self, EvalRequest};
use dvarnet::{Error, Result};

#[derive(Parser)]
#[command(name = "dvarnet", about = "Learned variational interpolation of sea surface height on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON experiment config; defaults apply where omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the full default config.
    InitConfig {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Year-long reference protocol instead of the desk-scale default.
        #[arg(long)]
        reference: bool,
    },
    /// Simulate truth, sample observations and compute the OI baseline.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory; `<output_dir>/dataset` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the OI baseline of a dataset.
    Oi {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint directory; `<output_dir>/train` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint and the OI baseline on a window of days.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, required_unless_present = "manifest")]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        dataset: Option<PathBuf>,
        /// Inclusive day range `FIRST:LAST`; the test period by default.
        #[arg(long, value_parser = parse_window)]
        window: Option<(usize, usize)>,
        /// Also score the fixed-point solver with N iterations.
        #[arg(long, value_name = "N")]
        fixed_point: Option<usize>,
        /// Rerun the evaluation recorded in an eval manifest.
        #[arg(long, conflicts_with_all = ["checkpoint", "dataset", "window", "fixed_point"])]
        manifest: Option<PathBuf>,
        /// Output directory; `<output_dir>/eval` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per seed and quantify the spread.
    Ensemble {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated seeds, overriding `ensemble.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory; `<output_dir>/ensemble` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the metrics tables of evaluation or ensemble directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected FIRST:LAST")?;
    let a = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if a > b {
        return Err(format!("window {a}:{b} is empty"));
    }
    Ok((a, b))
}

impl ConfigArgs {
    /// Config file, else the fallback, else defaults; then overrides.
    fn resolve(&self, fallback: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, fallback) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(c)) => c,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for o in &self.overrides {
            cfg.set(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dataset_config(dir: &Path) -> Result<ExperimentConfig> {
    Ok(pipeline::read_dataset_manifest(dir)?.config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::InitConfig { out, reference } => {
            let cfg = if reference { ExperimentConfig::reference_protocol() } else { ExperimentConfig::default() };
            match out {
                Some(p) => cfg.save(&p)?,
                None => println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes")),
            }
        }
        Command::Generate { cfg, out } => {
            let cfg = cfg.resolve(None)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.join("dataset"));
            let m = pipeline::cmd_generate(&cfg, &dir)?;
            println!("dataset {} ({} observations) written to {}", fmt_shape(m.shape), m.obs_count, dir.display());
        }
        Command::Oi { cfg, dataset } => {
            let cfg = cfg.resolve(Some(dataset_config(&dataset)?))?;
            pipeline::cmd_oi(&cfg, &dataset)?;
            println!("OI baseline recomputed in {}", dataset.display());
        }
        Command::Train { cfg, dataset, out } => {
            let cfg = cfg.resolve(Some(dataset_config(&dataset)?))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.join("train"));
            let ds = pipeline::Dataset::load(&dataset)?;
            let fit = pipeline::train_dataset(&cfg, &ds, &dir, |e| {
                eprintln!(
                    "epoch {:>3}  loss {:.5}  val mu {:.4}  lambda_x {:.3}  lambda_t {:.3}",
                    e.epoch, e.train_loss, e.val_mu_rmse_score, e.val_lambda_x, e.val_lambda_t
                )
            })?;
            println!("best epoch {}; checkpoint written to {}", fit.best_epoch, dir.display());
        }
        Command::Eval { cfg, checkpoint, dataset, window, fixed_point, manifest, out } => {
            let (req, base_dir) = match manifest {
                Some(m) => {
                    let dir = m.parent().map(Path::to_path_buf).unwrap_or_default();
                    (EvalRequest::from_manifest(&dvarnet::io::read_json(&m)?), dir)
                }
                None => {
                    let dataset = dataset.expect("required by clap");
                    let checkpoint = checkpoint.expect("required by clap");
                    let cfg = cfg.resolve(Some(dataset_config(&dataset)?))?;
                    let mut req = EvalRequest::new(&checkpoint, &dataset, &cfg);
                    req.window = window.map(|(a, b)| a..b + 1);
                    if fixed_point.is_some() {
                        req.fixed_point_iters = fixed_point;
                    }
                    (req, cfg.output_dir.join("eval"))
                }
            };
            let dir = out.unwrap_or(base_dir);
            let m = pipeline::cmd_eval(&req, &dir)?;
            print!("{}", pipeline::cmd_report(&[dir.clone()])?);
            println!("window {}..={}; outputs in {}", m.window[0], m.window[1], dir.display());
        }
        Command::Ensemble { cfg, dataset, seeds, out } => {
            let mut cfg = cfg.resolve(Some(dataset_config(&dataset)?))?;
            if let Some(s) = seeds {
                cfg.ensemble.seeds = s;
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir.join("ensemble"));
            pipeline::cmd_ensemble(&cfg, &dataset, &dir)?;
            print!("{}", pipeline::cmd_report(&[dir])?);
        }
        Command::Report { dirs } => print!("{}", pipeline::cmd_report(&dirs)?),
    }
    Ok(())
}

fn fmt_shape(s: [usize; 3]) -> String {
    format!("{}x{}x{}", s[0], s[1], s[2])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
