//! Run configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simplexvq::grad::AdamConfig;
use simplexvq::quantize::{QuantizerMode, QuantizerSettings};
use simplexvq::regularize::{RegConfig, RegKind};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ae,
    Contrastive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub contrastive: ContrastiveConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub codebook: CodebookConfig,
    #[serde(default)]
    pub quantizer: QuantizerSettings,
    #[serde(default)]
    pub temperature: TemperatureConfig,
    #[serde(default)]
    pub regularizer: RegConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training items (AE) or sequences (contrastive).
    pub items: usize,
    pub eval_items: usize,
    /// Input feature dimension.
    pub dim: usize,
    /// Clusters (AE) or hidden states (contrastive).
    pub clusters: usize,
    pub noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            items: 4096,
            eval_items: 1024,
            dim: 8,
            clusters: 16,
            noise: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub seq_len: usize,
    /// Probability that the hidden state repeats from one frame to the next.
    pub stay_prob: f64,
    pub mask_fraction: f64,
    pub distractors: usize,
    /// Logit temperature of the contrastive loss.
    pub logit_temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            seq_len: 32,
            stay_prob: 0.5,
            mask_fraction: 0.15,
            distractors: 10,
            logit_temperature: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { width: 64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookInit {
    /// Codes uniform on the unit sphere.
    Sphere,
    /// Sphere codes, except `outside_codes` of them moved to `outside_radius`.
    OutsideHull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    /// Codes per group.
    pub size: usize,
    /// Total feature dimension, split evenly over the groups.
    pub dim: usize,
    pub groups: usize,
    pub init: CodebookInit,
    pub outside_codes: usize,
    pub outside_radius: f64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            size: 16,
            dim: 8,
            groups: 1,
            init: CodebookInit::Sphere,
            outside_codes: 4,
            outside_radius: 10.0,
        }
    }
}

impl CodebookConfig {
    pub fn group_dim(&self) -> usize {
        self.dim / self.groups.max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// `log τ` is trained with the other parameters.
    Learnable,
    /// `τ` follows a fixed geometric schedule from `init` to `final`.
    Annealed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureConfig {
    pub mode: TemperatureMode,
    pub init: f64,
    #[serde(rename = "final")]
    pub final_: f64,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            mode: TemperatureMode::Learnable,
            init: 1.0,
            final_: 0.1,
        }
    }
}

impl TemperatureConfig {
    /// Logit temperature at training progress `frac ∈ [0, 1]`.
    pub fn at(&self, frac: f64) -> f64 {
        match self.mode {
            TemperatureMode::Learnable => self.init,
            TemperatureMode::Annealed => self.init * (self.final_ / self.init).powf(frac.clamp(0.0, 1.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    /// Defaults to half the peak.
    pub final_lr: Option<f64>,
    pub warmup_steps: usize,
    /// Defaults to 1e-4 for autoencoding and 0 for the contrastive task.
    pub weight_decay: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            peak_lr: 2e-3,
            final_lr: None,
            warmup_steps: 20,
            weight_decay: None,
            beta1: 0.9,
            beta2: 0.99,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn final_lr(&self) -> f64 {
        self.optimizer.final_lr.unwrap_or(0.5 * self.optimizer.peak_lr)
    }

    pub fn weight_decay(&self) -> f64 {
        self.optimizer.weight_decay.unwrap_or(match self.task {
            Task::Ae => 1e-4,
            Task::Contrastive => 0.0,
        })
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            weight_decay: self.weight_decay(),
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        let d = &self.data;
        if d.items == 0 || d.eval_items == 0 {
            return Err(invalid("data.items", "item counts must be positive"));
        }
        if d.dim == 0 {
            return Err(invalid("data.dim", "must be at least 1"));
        }
        if d.clusters == 0 || (self.task == Task::Ae && d.clusters < 2) {
            return Err(invalid("data.clusters", "autoencoding needs at least 2 clusters"));
        }
        if !(d.noise.is_finite() && d.noise >= 0.0) {
            return Err(invalid("data.noise", "must be finite and >= 0"));
        }
        if self.task == Task::Ae && d.items < self.batch_size {
            return Err(invalid("batch_size", format!("exceeds data.items = {}", d.items)));
        }
        let c = &self.codebook;
        if c.size < 2 {
            return Err(invalid("codebook.size", "must be at least 2"));
        }
        if c.groups == 0 || c.dim == 0 || !c.dim.is_multiple_of(c.groups) {
            return Err(invalid("codebook.dim", format!("{} must be a positive multiple of codebook.groups = {}", c.dim, c.groups)));
        }
        if c.init == CodebookInit::OutsideHull && (c.outside_codes >= c.size || c.outside_radius <= 0.0) {
            return Err(invalid("codebook.outside_codes", "must be below codebook.size with a positive radius"));
        }
        if self.model.width == 0 {
            return Err(invalid("model.width", "must be at least 1"));
        }
        let q = &self.quantizer;
        if !(q.gumbel_temperature.is_finite() && q.gumbel_temperature > 0.0) {
            return Err(invalid("quantizer.gumbel_temperature", "must be positive"));
        }
        if q.mode == QuantizerMode::Rotation && q.ste_codebook_grad {
            return Err(invalid("quantizer.ste_codebook_grad", "only applies to mode = \"ste\""));
        }
        let t = &self.temperature;
        if !(t.init > 0.0 && t.init.is_finite() && t.final_ > 0.0 && t.final_.is_finite()) {
            return Err(invalid("temperature", "init and final must be positive"));
        }
        self.regularizer
            .validate()
            .map_err(|e| invalid("regularizer", e))?;
        if matches!(self.regularizer.kind, RegKind::KnnL2 | RegKind::KnnCe) {
            let per_shard = self.batch_size / self.regularizer.knn.shards;
            let needed = self.regularizer.knn.k / self.regularizer.knn.shards;
            let rows = match self.task {
                Task::Ae => per_shard,
                Task::Contrastive => per_shard * self.contrastive.seq_len,
            };
            if rows < needed {
                return Err(invalid("regularizer.knn.k", "each shard of a batch holds fewer rows than K/S; use a larger batch or a smaller K"));
            }
        }
        let o = &self.optimizer;
        if !(o.peak_lr > 0.0 && o.peak_lr.is_finite()) {
            return Err(invalid("optimizer.peak_lr", "must be positive"));
        }
        if let Some(f) = o.final_lr {
            if !(f >= 0.0 && f <= o.peak_lr) {
                return Err(invalid("optimizer.final_lr", "must lie in [0, peak_lr]"));
            }
        }
        if let Some(wd) = o.weight_decay {
            if !(wd >= 0.0 && wd.is_finite()) {
                return Err(invalid("optimizer.weight_decay", "must be >= 0"));
            }
        }
        for (name, b) in [("optimizer.beta1", o.beta1), ("optimizer.beta2", o.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid(name, "must lie in [0, 1)"));
            }
        }
        if self.task == Task::Contrastive {
            let s = &self.contrastive;
            if s.seq_len < 4 {
                return Err(invalid("contrastive.seq_len", "must be at least 4"));
            }
            if !(s.mask_fraction > 0.0 && s.mask_fraction < 1.0) {
                return Err(invalid("contrastive.mask_fraction", "must lie in (0, 1)"));
            }
            if !(0.0..=1.0).contains(&s.stay_prob) {
                return Err(invalid("contrastive.stay_prob", "must lie in [0, 1]"));
            }
            if !(s.logit_temperature.is_finite() && s.logit_temperature > 0.0) {
                return Err(invalid("contrastive.logit_temperature", "must be positive"));
            }
            if s.distractors == 0 {
                return Err(invalid("contrastive.distractors", "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "task = \"ae\"\nepochs = 2\nbatch_size = 32\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.codebook.size, 16);
        assert_eq!(cfg.regularizer.weight, 1.0);
        assert_eq!(cfg.weight_decay(), 1e-4);
        assert_eq!(cfg.final_lr(), 1e-3);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::from_toml(MINIMAL).unwrap();
        cfg.regularizer.kind = RegKind::KnnCe;
        cfg.quantizer.mode = QuantizerMode::HardGumbel;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml(&format!("{MINIMAL}colour = 1\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = RunConfig::from_toml(&format!("{MINIMAL}[model]\nwidht = 3\n")).unwrap_err();
        assert!(err.to_string().contains("widht"), "{err}");
    }

    #[test]
    fn field_level_messages() {
        let err = RunConfig::from_toml(&format!("{MINIMAL}[codebook]\ndim = 7\ngroups = 2\n")).unwrap_err();
        assert!(err.to_string().contains("codebook.dim"), "{err}");
        let err = RunConfig::from_toml(&format!("{MINIMAL}[regularizer]\nkind = \"knn_ce\"\n[regularizer.knn]\nk = 3\nshards = 2\n"))
            .unwrap_err();
        assert!(err.to_string().contains("regularizer"), "{err}");
    }

    #[test]
    fn annealed_temperature_is_geometric() {
        let t = TemperatureConfig {
            mode: TemperatureMode::Annealed,
            init: 1.0,
            final_: 0.01,
        };
        assert_eq!(t.at(0.0), 1.0);
        assert!((t.at(0.5) - 0.1).abs() < 1e-12);
        assert!((t.at(1.0) - 0.01).abs() < 1e-12);
    }
}
