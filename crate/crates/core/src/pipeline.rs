//! On-disk experiment pipeline: datasets, checkpoints, evaluations and
//! ensembles, each a self-describing directory.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::ensemble::{check_seeds, ensemble_stats, uq_report, UqReport};
use crate::error::{Error, Result};
use crate::eval::{error_maps, psd_resolved_scales_with, rmse_score_series, MetricsRecord, PsdConfig, ResolvedScales, PSD_THRESHOLD};
use crate::field::{FieldSeq, Grid, ObsSet};
use crate::io;
use crate::model::{Method, Model, ModelConfig};
use crate::osse::{optimal_interp, sample_all, simulate_truth};
use crate::training::{fit_with, EpochLog, FitResult, TrainData};

pub const DATASET_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_BLOB: &str = "checkpoint.f64";
pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const EVAL_MANIFEST: &str = "eval.json";
pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";

/// Generated truth, observations and OI baseline.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: ExperimentConfig,
    pub truth: FieldSeq,
    pub nadir: Option<ObsSet>,
    pub swath: Option<ObsSet>,
    /// Union of all sensors.
    pub obs: ObsSet,
    pub oi: FieldSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// `[t, h, w]`.
    pub shape: [usize; 3],
    pub grid: Grid,
    pub start_date: chrono::NaiveDate,
    pub seed: u64,
    pub regime_seed: u64,
    pub sampling_seed: u64,
    pub has_nadir: bool,
    pub has_swath: bool,
    pub obs_count: usize,
    pub config_hash: String,
    /// SHA-256 of every blob, by file name.
    pub files: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

fn obs_files(prefix: &str) -> (String, String) {
    (format!("{prefix}.f64"), format!("{prefix}.mask"))
}

fn write_obs(dir: &Path, prefix: &str, obs: &ObsSet, files: &mut BTreeMap<String, String>) -> Result<()> {
    let (v, m) = obs_files(prefix);
    io::write_f64(&dir.join(&v), obs.values.data())?;
    io::write_mask(&dir.join(&m), &obs.mask)?;
    files.insert(v, io::sha256_f64(obs.values.data()));
    files.insert(m, io::sha256_hex(&obs.mask.iter().map(|&b| b as u8).collect::<Vec<_>>()));
    Ok(())
}

fn read_field(path: &Path, [t, h, w]: [usize; 3], grid: Grid) -> Result<FieldSeq> {
    let data = io::read_f64(path)?;
    if data.len() != t * h * w {
        return Err(Error::shape("read_field", format!("{}: {} values, expected {t}x{h}x{w}", path.display(), data.len())));
    }
    FieldSeq::new(t, h, w, data, grid)
}

fn read_obs(dir: &Path, prefix: &str, shape: [usize; 3], grid: Grid) -> Result<ObsSet> {
    let (v, m) = obs_files(prefix);
    let values = read_field(&dir.join(v), shape, grid)?;
    let mask = io::read_mask(&dir.join(&m))?;
    if mask.len() != values.data().len() {
        return Err(Error::shape("read_obs", format!("{m}: {} cells, expected {}", mask.len(), values.data().len())));
    }
    ObsSet::new(values, mask)
}

impl Dataset {
    /// Simulates the truth, samples the sensors and runs the OI baseline.
    pub fn generate(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let d = &config.domain;
        let truth = simulate_truth(d.t, d.h, d.w, d.grid(), &config.regime, config.regime_seed())?;
        let (nadir, swath, obs) = sample_all(&truth, &config.sampling, config.sampling_seed())?;
        let oi = optimal_interp(&obs, &config.oi)?;
        Ok(Self { config: config.clone(), truth, nadir, swath, obs, oi })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.truth.dims()
    }

    /// Reruns the OI baseline with `config.oi`.
    pub fn recompute_oi(&mut self, config: &ExperimentConfig) -> Result<()> {
        config.oi.validate()?;
        self.oi = optimal_interp(&self.obs, &config.oi)?;
        self.config.oi = config.oi.clone();
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<DatasetManifest> {
        let mut files = BTreeMap::new();
        io::write_f64(&dir.join("truth.f64"), self.truth.data())?;
        files.insert("truth.f64".to_string(), io::sha256_f64(self.truth.data()));
        if let Some(n) = &self.nadir {
            write_obs(dir, "nadir", n, &mut files)?;
        }
        if let Some(s) = &self.swath {
            write_obs(dir, "swath", s, &mut files)?;
        }
        write_obs(dir, "obs", &self.obs, &mut files)?;
        io::write_f64(&dir.join("oi.f64"), self.oi.data())?;
        files.insert("oi.f64".to_string(), io::sha256_f64(self.oi.data()));
        let (t, h, w) = self.dims();
        let manifest = DatasetManifest {
            shape: [t, h, w],
            grid: self.truth.grid,
            start_date: self.config.domain.start_date,
            seed: self.config.seed,
            regime_seed: self.config.regime_seed(),
            sampling_seed: self.config.sampling_seed(),
            has_nadir: self.nadir.is_some(),
            has_swath: self.swath.is_some(),
            obs_count: self.obs.count(),
            config_hash: self.config.hash(),
            files,
            config: self.config.clone(),
        };
        io::write_json(&dir.join(DATASET_MANIFEST), &manifest)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = read_dataset_manifest(dir)?;
        let truth = read_field(&dir.join("truth.f64"), m.shape, m.grid)?;
        let nadir = m.has_nadir.then(|| read_obs(dir, "nadir", m.shape, m.grid)).transpose()?;
        let swath = m.has_swath.then(|| read_obs(dir, "swath", m.shape, m.grid)).transpose()?;
        let obs = read_obs(dir, "obs", m.shape, m.grid)?;
        let oi = read_field(&dir.join("oi.f64"), m.shape, m.grid)?;
        Ok(Self { config: m.config, truth, nadir, swath, obs, oi })
    }

    /// Training and validation views for a config's periods.
    pub fn train_data(&self, config: &ExperimentConfig) -> Result<TrainData<'_>> {
        let [train, val, _] = config.period_ranges()?;
        let dt = config.domain.dt_days;
        let drift = [config.regime.drift[0] * dt, config.regime.drift[1] * dt];
        Ok(TrainData { truth: &self.truth, obs: &self.obs, oi: &self.oi, train, val, drift })
    }

    /// Fails when the config describes another domain than this dataset.
    pub fn check_config(&self, config: &ExperimentConfig) -> Result<()> {
        let (t, h, w) = self.dims();
        let d = &config.domain;
        let mut bad = Vec::new();
        for (name, a, b) in [("domain.t", d.t, t), ("domain.h", d.h, h), ("domain.w", d.w, w)] {
            if a != b {
                bad.push(format!("{name} = {a} but the dataset has {b}"));
            }
        }
        if d.grid() != self.truth.grid {
            bad.push(format!("grid {:?} but the dataset has {:?}", d.grid(), self.truth.grid));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Incompatible(bad.join("; ")))
        }
    }
}

pub fn read_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    io::read_json(&dir.join(DATASET_MANIFEST))
}

/// `generate`: writes truth, per-sensor and merged observations, the OI
/// baseline and the manifest to `dir`.
pub fn cmd_generate(config: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    Dataset::generate(config)?.save(dir)
}

/// `oi`: recomputes the OI baseline of a dataset in place.
pub fn cmd_oi(config: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    let mut ds = Dataset::load(dir)?;
    ds.recompute_oi(config)?;
    ds.save(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    /// Field units per network unit.
    pub scale: f64,
    pub channels: usize,
    pub param_count: usize,
    pub layers: Vec<(String, Vec<usize>)>,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub best_epoch: usize,
    pub selection_metric: String,
    pub grid: Grid,
    pub params_sha256: String,
    pub config_hash: String,
    pub dataset_config_hash: String,
}

pub struct Checkpoint {
    pub model: Model,
    pub manifest: CheckpointManifest,
}

pub fn save_checkpoint(dir: &Path, model: &Model, manifest: &CheckpointManifest) -> Result<()> {
    io::write_f64(&dir.join(CHECKPOINT_BLOB), &model.flat_params())?;
    io::write_json(&dir.join(CHECKPOINT_MANIFEST), manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: CheckpointManifest = io::read_json(&dir.join(CHECKPOINT_MANIFEST))?;
    let params = io::read_f64(&dir.join(CHECKPOINT_BLOB))?;
    let mut model = Model::new(&manifest.model, 0)?;
    if params.len() != model.param_count() {
        return Err(Error::Incompatible(format!(
            "{CHECKPOINT_BLOB} holds {} parameters but the manifest model has {}",
            params.len(),
            model.param_count()
        )));
    }
    model.set_flat_params(&params)?;
    model.scale = manifest.scale;
    Ok(Checkpoint { model, manifest })
}

fn log_rows(log: &[EpochLog]) -> Vec<Vec<String>> {
    log.iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                io::fmt_f64(e.train_loss),
                io::fmt_f64(e.val_mu_rmse_score),
                io::fmt_f64(e.val_lambda_x),
                io::fmt_f64(e.val_lambda_t),
            ]
        })
        .collect()
}

pub const TRAIN_LOG_HEADER: [&str; 5] = ["epoch", "train_loss", "val_mu_rmse_score", "val_lambda_x", "val_lambda_t"];

/// Trains on a loaded dataset and writes checkpoint, manifest and log to
/// `dir`.
pub fn train_dataset(
    config: &ExperimentConfig,
    ds: &Dataset,
    dir: &Path,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    config.validate()?;
    ds.check_config(config)?;
    let train = config.train_config();
    let fit = fit_with(&ds.train_data(config)?, &config.model, &train, on_epoch)?;
    let manifest = CheckpointManifest {
        model: config.model.clone(),
        scale: fit.model.scale,
        channels: config.model.channels(),
        param_count: fit.model.param_count(),
        layers: fit.model.layout(),
        init_seed: train.init_seed,
        shuffle_seed: train.shuffle_seed,
        best_epoch: fit.best_epoch,
        selection_metric: "val_mu_rmse_score".into(),
        grid: ds.truth.grid,
        params_sha256: io::sha256_f64(&fit.model.flat_params()),
        config_hash: config.hash(),
        dataset_config_hash: ds.config.hash(),
    };
    save_checkpoint(dir, &fit.model, &manifest)?;
    io::write_csv(&dir.join(TRAIN_LOG), &TRAIN_LOG_HEADER, &log_rows(&fit.log))?;
    io::write_json(&dir.join("config.json"), config)?;
    Ok(fit)
}

/// `train`: fits a model on the dataset in `dataset_dir`.
pub fn cmd_train(config: &ExperimentConfig, dataset_dir: &Path, dir: &Path) -> Result<FitResult> {
    config.validate()?;
    let ds = Dataset::load(dataset_dir)?;
    train_dataset(config, &ds, dir, |_| {})
}

/// Everything needed to rerun an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Inclusive first and last day.
    pub window: [usize; 2],
    pub fixed_point_iters: Option<usize>,
    pub batch: usize,
    pub psd: PsdConfig,
    pub psd_threshold: f64,
    pub snapshot_days: Vec<usize>,
    pub metrics: BTreeMap<String, MetricsRecord>,
    /// SHA-256 of every written blob and table, by file name.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Defaults to the test period of the dataset config.
    pub window: Option<Range<usize>>,
    pub fixed_point_iters: Option<usize>,
    pub batch: usize,
    pub psd: PsdConfig,
    pub snapshot_days: Vec<usize>,
}

impl EvalRequest {
    pub fn new(checkpoint: &Path, dataset: &Path, config: &ExperimentConfig) -> Self {
        Self {
            checkpoint: checkpoint.to_path_buf(),
            dataset: dataset.to_path_buf(),
            window: None,
            fixed_point_iters: config.eval.fixed_point_iters,
            batch: config.eval.batch,
            psd: config.eval.psd,
            snapshot_days: config.eval.snapshot_days.clone(),
        }
    }

    pub fn from_manifest(m: &EvalManifest) -> Self {
        Self {
            checkpoint: m.checkpoint.clone(),
            dataset: m.dataset.clone(),
            window: Some(m.window[0]..m.window[1] + 1),
            fixed_point_iters: m.fixed_point_iters,
            batch: m.batch,
            psd: m.psd,
            snapshot_days: m.snapshot_days.clone(),
        }
    }
}

/// Names every way a checkpoint does not fit a dataset.
pub fn check_compatible(ckpt: &CheckpointManifest, ds: &Dataset) -> Result<()> {
    let mut bad = Vec::new();
    let expected = ckpt.model.channels();
    if ckpt.channels != expected {
        bad.push(format!("checkpoint channels {} but its model needs {expected}", ckpt.channels));
    }
    if ckpt.grid != ds.truth.grid {
        bad.push(format!("grid: checkpoint {:?}, dataset {:?}", ckpt.grid, ds.truth.grid));
    }
    let (t, h, w) = ds.dims();
    if h % 2 != 0 || w % 2 != 0 {
        bad.push(format!("dataset extent {h}x{w} is not even"));
    }
    if t < 1 {
        bad.push("dataset has no days".into());
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Incompatible(bad.join("; ")))
    }
}

/// Metrics of one reconstruction with its spectral detail.
pub struct Scored {
    pub record: MetricsRecord,
    pub scales: ResolvedScales,
}

pub fn score(rec: &FieldSeq, truth: &FieldSeq, psd: &PsdConfig) -> Result<Scored> {
    let s = rmse_score_series(rec, truth)?;
    let scales = psd_resolved_scales_with(rec, truth, psd)?;
    Ok(Scored {
        record: MetricsRecord {
            mu_rmse_score: s.mu,
            sigma_rmse_score: s.sigma,
            lambda_x: scales.lambda_x,
            lambda_t: scales.lambda_t,
        },
        scales,
    })
}

pub const METRICS_HEADER: [&str; 5] = ["method", "mu_rmse_score", "sigma_rmse_score", "lambda_x", "lambda_t"];

fn metrics_row(name: &str, m: &MetricsRecord) -> Vec<String> {
    vec![
        name.to_string(),
        io::fmt_f64(m.mu_rmse_score),
        io::fmt_f64(m.sigma_rmse_score),
        io::fmt_f64(m.lambda_x),
        io::fmt_f64(m.lambda_t),
    ]
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(io::sha256_hex(&bytes))
}

/// Scores named reconstructions of `truth` and writes metrics, error maps,
/// spectral score grids, raw fields and PGM snapshots to `dir`.
pub fn write_evaluation(
    dir: &Path,
    truth: &FieldSeq,
    recs: &[(&str, &FieldSeq)],
    psd: &PsdConfig,
    snapshot_days: &[usize],
) -> Result<(BTreeMap<String, MetricsRecord>, BTreeMap<String, String>)> {
    let mut metrics = BTreeMap::new();
    let mut rows = Vec::new();
    let mut written = Vec::new();
    let (t, h, w) = truth.dims();
    let truth_rms = truth.rms();
    let (lo, hi) = (-3.0 * truth_rms, 3.0 * truth_rms);
    io::write_f64(&dir.join("truth.f64"), truth.data())?;
    written.push("truth.f64".to_string());
    for &d in snapshot_days.iter().filter(|&&d| d < t) {
        let name = format!("snapshot_truth_day{d}.pgm");
        io::write_pgm16(&dir.join(&name), truth.frame(d), h, w, lo, hi)?;
        written.push(name);
    }
    let mut series_cols = Vec::new();
    for &(name, rec) in recs {
        let scored = score(rec, truth, psd)?;
        rows.push(metrics_row(name, &scored.record));
        metrics.insert(name.to_string(), scored.record);
        let (map, series) = error_maps(rec, truth)?;
        let files = [format!("rec_{name}.f64"), format!("error_map_{name}.f64")];
        io::write_f64(&dir.join(&files[0]), rec.data())?;
        io::write_f64(&dir.join(&files[1]), map.data())?;
        let map_max = map.data().iter().cloned().fold(0.0, f64::max);
        let map_pgm = format!("error_map_{name}.pgm");
        io::write_pgm16(&dir.join(&map_pgm), map.data(), h, w, 0.0, map_max)?;
        written.extend(files);
        written.push(map_pgm);
        series_cols.push(series);
        let g = &scored.scales.grid;
        let nf = g.wavelength_t.len();
        let mut grid_rows = Vec::with_capacity(g.score.len());
        for (r, lx) in g.wavelength_x.iter().enumerate() {
            for (m, lt) in g.wavelength_t.iter().enumerate() {
                grid_rows.push(vec![io::fmt_f64(*lx), io::fmt_f64(*lt), io::fmt_f64(g.score[r * nf + m])]);
            }
        }
        let psd_name = format!("psd_score_{name}.csv");
        io::write_csv(&dir.join(&psd_name), &["wavelength_x", "wavelength_t", "score"], &grid_rows)?;
        written.push(psd_name);
        for &d in snapshot_days.iter().filter(|&&d| d < t) {
            let snap = format!("snapshot_{name}_day{d}.pgm");
            io::write_pgm16(&dir.join(&snap), rec.frame(d), h, w, lo, hi)?;
            written.push(snap);
        }
    }
    io::write_csv(&dir.join(METRICS_CSV), &METRICS_HEADER, &rows)?;
    written.push(METRICS_CSV.to_string());
    let mut header = vec!["day"];
    header.extend(recs.iter().map(|(n, _)| *n));
    let series_rows: Vec<Vec<String>> = (0..t)
        .map(|d| std::iter::once(d.to_string()).chain(series_cols.iter().map(|s| io::fmt_f64(s[d]))).collect())
        .collect();
    io::write_csv(&dir.join("error_series.csv"), &header, &series_rows)?;
    written.push("error_series.csv".to_string());
    let mut files = BTreeMap::new();
    for name in written {
        files.insert(name.clone(), file_hash(&dir.join(&name))?);
    }
    Ok((metrics, files))
}

/// `eval`: scores the checkpoint, the OI baseline and optionally the
/// fixed-point solver on a window of days.
pub fn cmd_eval(req: &EvalRequest, dir: &Path) -> Result<EvalManifest> {
    let ckpt = load_checkpoint(&req.checkpoint)?;
    let ds = Dataset::load(&req.dataset)?;
    check_compatible(&ckpt.manifest, &ds)?;
    let window = match &req.window {
        Some(w) => w.clone(),
        None => ds.config.periods.test.range(&ds.config.domain)?,
    };
    let (t, _, _) = ds.dims();
    if window.is_empty() || window.end > t {
        return Err(Error::Config(format!("eval window {window:?} outside 0..{t}")));
    }
    if req.batch == 0 {
        return Err(Error::Config("eval batch must be positive".into()));
    }
    let truth = ds.truth.slice_t(window.start, window.len())?;
    let oi = ds.oi.slice_t(window.start, window.len())?;
    let learned = ckpt.model.reconstruct(&ds.obs, &ds.oi, window.clone(), Method::Learned, req.batch)?;
    let fixed = match req.fixed_point_iters {
        Some(0) => return Err(Error::Config("fixed-point iterations must be positive".into())),
        Some(n) => Some(ckpt.model.reconstruct(&ds.obs, &ds.oi, window.clone(), Method::FixedPoint(n), req.batch)?),
        None => None,
    };
    let mut recs: Vec<(&str, &FieldSeq)> = vec![("oi", &oi), ("4dvarnet", &learned)];
    if let Some(f) = &fixed {
        recs.push(("fixed_point", f));
    }
    let (metrics, files) = write_evaluation(dir, &truth, &recs, &req.psd, &req.snapshot_days)?;
    let manifest = EvalManifest {
        checkpoint: req.checkpoint.clone(),
        dataset: req.dataset.clone(),
        window: [window.start, window.end - 1],
        fixed_point_iters: req.fixed_point_iters,
        batch: req.batch,
        psd: req.psd,
        psd_threshold: PSD_THRESHOLD,
        snapshot_days: req.snapshot_days.clone(),
        metrics,
        files,
    };
    io::write_json(&dir.join(EVAL_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reruns the evaluation recorded in `manifest_path` into `dir`.
pub fn rerun_eval(manifest_path: &Path, dir: &Path) -> Result<EvalManifest> {
    let m: EvalManifest = io::read_json(manifest_path)?;
    cmd_eval(&EvalRequest::from_manifest(&m), dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub params_sha256: String,
    pub best_epoch: usize,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seeds: Vec<u64>,
    pub dataset: PathBuf,
    /// Inclusive first and last day.
    pub window: [usize; 2],
    pub members: Vec<MemberRecord>,
    pub median: MetricsRecord,
    pub oi: MetricsRecord,
    pub uq: UqReport,
    pub config_hash: String,
}

/// Members, median and spread of an ensemble on one window.
pub struct EnsembleRun {
    pub members: Vec<FieldSeq>,
    pub median: FieldSeq,
    pub std: FieldSeq,
    pub uq: UqReport,
}

/// `ensemble`: one training per seed of `config.ensemble.seeds`, differing
/// only in the initialization seed, then median and spread on the test
/// period.
pub fn cmd_ensemble(config: &ExperimentConfig, dataset_dir: &Path, dir: &Path) -> Result<(EnsembleManifest, EnsembleRun)> {
    config.validate()?;
    let seeds = &config.ensemble.seeds;
    check_seeds(seeds)?;
    let ds = Dataset::load(dataset_dir)?;
    ds.check_config(config)?;
    let window = config.periods.test.range(&config.domain)?;
    let truth = ds.truth.slice_t(window.start, window.len())?;
    let mut members = Vec::new();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    let mut errors = Vec::new();
    for &seed in seeds {
        let mut member_cfg = config.clone();
        member_cfg.seeds.init = Some(seed);
        let member_dir = dir.join(format!("member_{seed}"));
        let run = train_dataset(&member_cfg, &ds, &member_dir, |_| {}).and_then(|fit| {
            let rec = fit.model.reconstruct(&ds.obs, &ds.oi, window.clone(), Method::Learned, config.eval.batch)?;
            let m = score(&rec, &truth, &config.eval.psd)?.record;
            Ok((fit, rec, m))
        });
        match run {
            Ok((fit, rec, m)) => {
                records.push(MemberRecord {
                    seed,
                    checkpoint: member_dir,
                    params_sha256: io::sha256_f64(&fit.model.flat_params()),
                    best_epoch: fit.best_epoch,
                    metrics: m,
                });
                members.push(rec);
            }
            Err(e) => {
                failed.push(seed);
                errors.push(format!("seed {seed}: {e}"));
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::Ensemble { seeds: failed, detail: errors.join("; ") });
    }
    let (median, std) = ensemble_stats(&members)?;
    let uq = uq_report(&median, &std, &truth)?;
    let oi = ds.oi.slice_t(window.start, window.len())?;
    let median_m = score(&median, &truth, &config.eval.psd)?.record;
    let oi_m = score(&oi, &truth, &config.eval.psd)?.record;
    io::write_f64(&dir.join("median.f64"), median.data())?;
    io::write_f64(&dir.join("std.f64"), std.data())?;
    let mut rows: Vec<Vec<String>> = records.iter().map(|r| metrics_row(&format!("member_{}", r.seed), &r.metrics)).collect();
    rows.push(metrics_row("median", &median_m));
    rows.push(metrics_row("oi", &oi_m));
    io::write_csv(&dir.join(METRICS_CSV), &METRICS_HEADER, &rows)?;
    io::write_csv(
        &dir.join("uq_report.csv"),
        &["variant", "r_squared"],
        &[vec!["pointwise".to_string(), io::fmt_f64(uq.r2_pointwise)], vec!["time_mean".to_string(), io::fmt_f64(uq.r2_time_mean)]],
    )?;
    let manifest = EnsembleManifest {
        seeds: seeds.clone(),
        dataset: dataset_dir.to_path_buf(),
        window: [window.start, window.end - 1],
        members: records,
        median: median_m,
        oi: oi_m,
        uq,
        config_hash: config.hash(),
    };
    io::write_json(&dir.join(ENSEMBLE_MANIFEST), &manifest)?;
    Ok((manifest, EnsembleRun { members, median, std, uq }))
}

/// `report`: a plain-text table of every metrics CSV and UQ report found
/// directly in `dirs`.
pub fn cmd_report(dirs: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    for dir in dirs {
        let path = dir.join(METRICS_CSV);
        let (header, rows) = io::read_csv(&path)?;
        out.push_str(&format!("{}\n", dir.display()));
        out.push_str(&format!("  {:<14}{:>10}{:>10}{:>11}{:>11}\n", "method", "mu", "sigma", "lambda_x", "lambda_t"));
        if header != METRICS_HEADER {
            return Err(Error::Invalid(format!("{}: unexpected header {header:?}", path.display())));
        }
        for r in rows {
            let num = |i: usize| r[i].parse::<f64>().unwrap_or(f64::NAN);
            out.push_str(&format!("  {:<14}{:>10.4}{:>10.4}{:>11.3}{:>11.3}\n", r[0], num(1), num(2), num(3), num(4)));
        }
        let uq = dir.join(ENSEMBLE_MANIFEST);
        if uq.exists() {
            let m: EnsembleManifest = io::read_json(&uq)?;
            out.push_str(&format!(
                "  R2(std, |error|): pointwise {:.4}, time-mean {:.4}\n",
                m.uq.r2_pointwise, m.uq.r2_time_mean
            ));
        }
    }
    Ok(out)
}
