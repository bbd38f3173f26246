//! Experiment configuration: every knob of the pipeline in one JSON file.

use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::PsdConfig;
use crate::field::Grid;
use crate::io;
use crate::model::ModelConfig;
use crate::osse::{OiConfig, RegimeConfig, SamplingConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub cell_deg: f64,
    pub dt_days: f64,
    /// Calendar date of day 0.
    pub start_date: NaiveDate,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            t: 60,
            h: 64,
            w: 64,
            cell_deg: 0.1,
            dt_days: 1.0,
            start_date: NaiveDate::from_ymd_opt(2012, 10, 1).expect("valid date"),
        }
    }
}

impl DomainConfig {
    pub fn grid(&self) -> Grid {
        Grid { cell_deg: self.cell_deg, dt_days: self.dt_days }
    }
}

/// A day given by index or by calendar date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DayRef {
    Index(usize),
    Date(NaiveDate),
}

impl DayRef {
    fn resolve(&self, domain: &DomainConfig) -> Result<usize> {
        match self {
            DayRef::Index(d) => Ok(*d),
            DayRef::Date(date) => {
                let days = (*date - domain.start_date).num_days();
                if days < 0 {
                    return Err(Error::Config(format!("{date} precedes the start date {}", domain.start_date)));
                }
                Ok((days as f64 / domain.dt_days).round() as usize)
            }
        }
    }
}

/// Inclusive range of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: DayRef,
    pub end: DayRef,
}

impl Period {
    pub fn days(a: usize, b: usize) -> Self {
        Self { start: DayRef::Index(a), end: DayRef::Index(b) }
    }

    fn dates(a: (i32, u32, u32), b: (i32, u32, u32)) -> Self {
        let d = |(y, m, day)| DayRef::Date(NaiveDate::from_ymd_opt(y, m, day).expect("valid date"));
        Self { start: d(a), end: d(b) }
    }

    /// Half-open day range within a domain.
    pub fn range(&self, domain: &DomainConfig) -> Result<Range<usize>> {
        let (a, b) = (self.start.resolve(domain)?, self.end.resolve(domain)?);
        if a > b || b >= domain.t {
            return Err(Error::Config(format!("period {a}..={b} is empty or outside 0..{}", domain.t)));
        }
        Ok(a..b + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Periods {
    pub train: Period,
    pub val: Period,
    pub test: Period,
}

impl Default for Periods {
    fn default() -> Self {
        Self { test: Period::days(2, 19), val: Period::days(22, 29), train: Period::days(32, 59) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Also score the parameter-free fixed-point solver with this many
    /// iterations.
    pub fixed_point_iters: Option<usize>,
    /// Windows solved together.
    pub batch: usize,
    pub psd: PsdConfig,
    /// Test-period day offsets written as PGM snapshots.
    pub snapshot_days: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { fixed_point_iters: None, batch: 4, psd: PsdConfig::default(), snapshot_days: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Initialization seeds, one member each.
    pub seeds: Vec<u64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { seeds: vec![11, 12, 13] }
    }
}

/// Explicit seeds taking precedence over the ones derived from the global seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedOverrides {
    pub regime: Option<u64>,
    pub sampling: Option<u64>,
    pub init: Option<u64>,
    pub shuffle: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub seeds: SeedOverrides,
    pub domain: DomainConfig,
    pub regime: RegimeConfig,
    pub sampling: SamplingConfig,
    pub oi: OiConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub periods: Periods,
    pub eval: EvalConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2012,
            output_dir: PathBuf::from("runs"),
            seeds: SeedOverrides::default(),
            domain: DomainConfig::default(),
            regime: RegimeConfig::default(),
            sampling: SamplingConfig::default(),
            oi: OiConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            periods: Periods::default(),
            eval: EvalConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

/// Named stream of the global seed.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

impl ExperimentConfig {
    /// A year-long daily run with the dated train/validation/test periods of
    /// the reference protocol and wider networks.
    pub fn reference_protocol() -> Self {
        let mut c = Self::default();
        c.domain = DomainConfig { t: 365, h: 200, w: 200, cell_deg: 0.05, ..DomainConfig::default() };
        c.periods = Periods {
            train: Period::dates((2013, 2, 4), (2013, 9, 30)),
            val: Period::dates((2013, 1, 1), (2013, 2, 2)),
            test: Period::dates((2012, 10, 22), (2012, 12, 2)),
        };
        c.model.prior.hidden = 96;
        c.model.prior.bilinear = 48;
        c.model.solver.hidden = 96;
        c.train.epochs = 200;
        c.train.batch_size = 2;
        c.train.patch = [7, 100, 100];
        c.oi.lx = 2.0 * c.oi.lx;
        c.oi.ly = 2.0 * c.oi.ly;
        c.ensemble.seeds = (1..=9).collect();
        c
    }

    pub fn regime_seed(&self) -> u64 {
        self.seeds.regime.unwrap_or_else(|| sub_seed(self.seed, "regime"))
    }

    pub fn sampling_seed(&self) -> u64 {
        self.seeds.sampling.unwrap_or_else(|| sub_seed(self.seed, "sampling"))
    }

    pub fn init_seed(&self) -> u64 {
        self.seeds.init.unwrap_or_else(|| sub_seed(self.seed, "init"))
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.seeds.shuffle.unwrap_or_else(|| sub_seed(self.seed, "shuffle"))
    }

    /// Training settings with the resolved seeds filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { init_seed: self.init_seed(), shuffle_seed: self.shuffle_seed(), ..self.train.clone() }
    }

    pub fn period_ranges(&self) -> Result<[Range<usize>; 3]> {
        Ok([
            self.periods.train.range(&self.domain)?,
            self.periods.val.range(&self.domain)?,
            self.periods.test.range(&self.domain)?,
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if d.t == 0 || d.h == 0 || d.w == 0 || !(d.cell_deg > 0.0) || !(d.dt_days > 0.0) {
            return Err(Error::Config(format!("invalid domain {d:?}")));
        }
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return Err(Error::Config(format!("domain extents must be even, got {}x{}", d.h, d.w)));
        }
        self.regime.validate()?;
        if let Some(n) = &self.sampling.nadir {
            n.validate()?;
        }
        if let Some(s) = &self.sampling.swath {
            s.validate()?;
        }
        self.oi.validate()?;
        self.model.validate()?;
        self.train.validate(&self.model)?;
        if self.eval.batch == 0 || self.eval.fixed_point_iters == Some(0) {
            return Err(Error::Config("eval batch and fixed-point iterations must be positive".into()));
        }
        let [train, val, test] = self.period_ranges()?;
        let named = [("train", &train), ("val", &val), ("test", &test)];
        for (i, (na, a)) in named.iter().enumerate() {
            for (nb, b) in &named[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return Err(Error::Config(format!(
                        "{na} period {}..={} overlaps {nb} period {}..={}",
                        a.start,
                        a.end - 1,
                        b.start,
                        b.end - 1
                    )));
                }
            }
        }
        if train.len() < self.train.patch[0] {
            return Err(Error::Config(format!(
                "training period of {} days is shorter than the {}-frame patch",
                train.len(),
                self.train.patch[0]
            )));
        }
        if self.train.patch[1] > d.h || self.train.patch[2] > d.w {
            return Err(Error::Config(format!("patch {:?} exceeds domain {}x{}", self.train.patch, d.h, d.w)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Canonical JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        io::sha256_hex(self.to_json().as_bytes())
    }

    /// Applies `section.key=value`; the value is parsed as JSON when it can
    /// be, otherwise taken as a string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut root;
        for part in key.split('.') {
            node = match node {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        }
        *node = value;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }
}
