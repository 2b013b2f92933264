//! Run directory contents and JSONL records.
//!
//! `metrics.jsonl` holds one [`EpochRecord`] per epoch and `steps.jsonl` one
//! [`StepRecord`] per optimizer step; both are pure functions of the config
//! and seed. Wall-clock times go to `timing.jsonl`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simplexvq::diagnostics::UsageReport;

use crate::eval::EvalMetrics;
use crate::Result;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const STEPS_FILE: &str = "steps.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.toml";
/// Environment variable naming the run directory when `--out` is absent.
pub const RUN_DIR_ENV: &str = "SIMPLEXVQ_RUN_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub aborted_steps: usize,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
    pub main_loss: f64,
    /// Unweighted regularization term.
    pub reg_loss: f64,
    pub reg_weight: f64,
    pub total_loss: f64,
    /// Logit temperature of each group at the end of the epoch.
    pub temperature: Vec<f64>,
    pub usage: Vec<UsageReport>,
    pub onehotness: Vec<f64>,
    pub mean_perplexity: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hard_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub soft_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub config_hash: String,
}

impl EpochRecord {
    pub fn eval(&self) -> EvalMetrics {
        EvalMetrics {
            usage: self.usage.clone(),
            onehotness: self.onehotness.clone(),
            mean_perplexity: self.mean_perplexity.clone(),
            hard_rmse: self.hard_rmse,
            soft_rmse: self.soft_rmse,
            accuracy: self.accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub main: f64,
    pub reg: f64,
    pub total: f64,
    /// Set when a non-finite loss or gradient stopped the update.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub epoch: usize,
    pub seconds: f64,
}

/// Appending JSONL writers for one run directory.
pub struct RunFiles {
    dir: PathBuf,
    metrics: BufWriter<File>,
    steps: BufWriter<File>,
    timing: BufWriter<File>,
}

fn jsonl<T: Serialize>(w: &mut BufWriter<File>, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

impl RunFiles {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        Ok(Self {
            metrics: open(METRICS_FILE)?,
            steps: open(STEPS_FILE)?,
            timing: open(TIMING_FILE)?,
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn epoch(&mut self, r: &EpochRecord) -> Result<()> {
        jsonl(&mut self.metrics, r)
    }

    pub fn step(&mut self, r: &StepRecord) -> Result<()> {
        jsonl(&mut self.steps, r)
    }

    pub fn timing(&mut self, r: &TimingRecord) -> Result<()> {
        jsonl(&mut self.timing, r)
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
