use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{AggregationWindow, Strategy};
use crate::data::{ingest_csv, synthesize, CsvSchema, Dataset, SplitSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{Architecture, TrainConfig};
use crate::uncertainty::MiFormula;

pub const CONFIG_VERSION: u32 = 1;

/// Full description of an experiment. Every section except `data` and
/// `split` has defaults; [`ExperimentConfig::to_toml`] writes them all out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub data: DataConfig,
    pub split: SplitSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub model: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv,
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// CSV file, relative paths resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: CsvSchema,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub synth_seed: u64,
}

/// Experiment calendar in whole days from the dataset start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub base_start_day: i64,
    /// Exclusive; also the cursor of the first query.
    pub base_end_day: i64,
    pub cadence_days: i64,
    /// Number of queries.
    pub budget: usize,
    pub test_start_day: i64,
    /// Exclusive.
    pub test_end_day: i64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_start_day: 0,
            base_end_day: 10,
            cadence_days: 5,
            budget: 4,
            test_start_day: 20,
            test_end_day: 30,
        }
    }
}

impl ScheduleConfig {
    /// Cursor day after `i` queries.
    pub fn cursor(&self, i: usize) -> i64 {
        self.base_end_day + i as i64 * self.cadence_days
    }
}

/// Spacing, in minutes, between window midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub train_stride: usize,
    pub score_stride: usize,
    pub test_stride: usize,
    /// Rows per MC-dropout batch.
    pub batch_rows: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            train_stride: 1,
            score_stride: 15,
            test_stride: 1,
            batch_rows: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    /// MC-dropout forward passes F.
    pub passes: usize,
    /// Monte-Carlo samples S for the mixture entropy.
    pub samples: usize,
    pub mi_formula: MiFormula,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            passes: 25,
            samples: 1000,
            mi_formula: MiFormula::Corrected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionFunction {
    #[default]
    Entropy,
    #[serde(alias = "mi")]
    MutualInformation,
    Random,
}

impl AcquisitionFunction {
    pub fn label(self) -> &'static str {
        match self {
            AcquisitionFunction::Entropy => "entropy",
            AcquisitionFunction::MutualInformation => "mi",
            AcquisitionFunction::Random => "random",
        }
    }
}

impl std::str::FromStr for AcquisitionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Self::Entropy),
            "mi" | "mutual_information" => Ok(Self::MutualInformation),
            "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown acquisition function `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub function: AcquisitionFunction,
    pub strategy: Strategy,
    pub window: AggregationWindow,
    /// Appliances to model, also the round-robin order. Empty means every
    /// appliance in the dataset, sorted by name.
    pub appliances: Vec<String>,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            function: AcquisitionFunction::Entropy,
            strategy: Strategy::Uniform,
            window: AggregationWindow::default(),
            appliances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Predict with one pass and no dropout instead of the MC ensemble mean.
    pub deterministic: bool,
    /// Fractions above the total-baseline RMSE used for sensor counts.
    pub thresholds: Vec<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            deterministic: false,
            thresholds: vec![0.10, 0.20, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub checkpoints: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            checkpoints: false,
        }
    }
}

/// One series of a sweep: an acquisition function run over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArm {
    pub function: AcquisitionFunction,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub arms: Vec<SweepArm>,
    /// Seeds for the total baseline; empty skips it.
    pub total_seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.arms.is_empty() {
            v.push("sweep: strategy list is empty".into());
        }
        for a in &self.arms {
            if a.seeds.is_empty() {
                v.push(format!("sweep: arm `{}` has no seeds", a.function.label()));
            }
        }
        v
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads a config file; a relative CSV path becomes relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem that can be found without loading data.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.version != CONFIG_VERSION {
            v.push(format!("version must be {CONFIG_VERSION}, got {}", self.version));
        }
        match self.data.source {
            DataSource::Csv if self.data.path.is_none() => v.push("data: source = \"csv\" needs a path".into()),
            DataSource::Synth => v.extend(self.data.synth.violations()),
            _ => {}
        }
        v.extend(self.split.violations(None));
        let s = &self.schedule;
        if s.base_end_day <= s.base_start_day {
            v.push("schedule: base window must span at least one day".into());
        }
        if s.cadence_days < 1 {
            v.push("schedule: cadence_days must be >= 1".into());
        }
        if s.test_end_day <= s.test_start_day {
            v.push("schedule: test window must span at least one day".into());
        }
        if s.budget > self.split.pool.len() {
            v.push(format!(
                "schedule: budget {} exceeds pool size {}",
                s.budget,
                self.split.pool.len()
            ));
        }
        v.extend(self.model.violations());
        v.extend(self.train.violations());
        let sm = &self.sampling;
        if sm.train_stride == 0 || sm.score_stride == 0 || sm.test_stride == 0 || sm.batch_rows == 0 {
            v.push("sampling: strides and batch_rows must be >= 1".into());
        }
        if self.uncertainty.passes == 0 {
            v.push("uncertainty: passes F must be >= 1".into());
        }
        if self.uncertainty.samples == 0 {
            v.push("uncertainty: samples S must be >= 1".into());
        }
        v.extend(self.acquisition.window.violations());
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.acquisition.appliances {
            if !seen.insert(a) {
                v.push(format!("acquisition: appliance `{a}` listed twice"));
            }
        }
        if self.evaluation.thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            v.push("evaluation: thresholds must be finite and >= 0".into());
        }
        if self.run.seeds.is_empty() {
            v.push("run: seeds must not be empty".into());
        }
        if let Some(sw) = &self.sweep {
            v.extend(sw.violations());
        }
        v
    }

    /// Problems that need the dataset: house ids, coverage, appliance names.
    pub fn data_violations(&self, dataset: &Dataset) -> Vec<String> {
        let mut v = self.split.violations(Some(dataset));
        let days = (dataset.end() - dataset.start()) / crate::data::MINUTES_PER_DAY;
        let s = &self.schedule;
        let last = s.cursor(s.budget);
        if s.base_start_day < 0 || last > days {
            v.push(format!(
                "schedule: days {}..{last} fall outside the data coverage of {days} days",
                s.base_start_day
            ));
        }
        if s.test_start_day < 0 || s.test_end_day > days {
            v.push(format!(
                "schedule: test days {}..{} fall outside the data coverage of {days} days",
                s.test_start_day, s.test_end_day
            ));
        }
        let known = dataset.appliance_names();
        for a in &self.acquisition.appliances {
            if !known.contains(a) {
                v.push(format!("acquisition: appliance `{a}` not in dataset"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.data.source {
            DataSource::Synth => synthesize(&self.data.synth, self.data.synth_seed),
            DataSource::Csv => {
                let path = self.data.path.as_ref().ok_or_else(|| Error::config("data: csv source needs a path"))?;
                ingest_csv(path, &self.data.schema)
            }
        }
    }
}
