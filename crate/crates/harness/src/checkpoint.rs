//! Checkpoint container: the run config, per-group codebook containers and
//! named model weights, as one JSON document.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use simplexvq::quantize::{Codebook, CodebookFile, ProductCodebook};
use simplexvq::Tensor;

use crate::config::RunConfig;
use crate::model::Model;
use crate::{HarnessError, Result};

pub const CHECKPOINT_FORMAT: &str = "simplexvq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub steps: usize,
    pub config: RunConfig,
    pub codebooks: Vec<CodebookFile>,
    pub weights: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &Model, cfg: &RunConfig, epoch: usize, steps: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch,
            steps,
            config: cfg.clone(),
            codebooks: model.codebooks.groups().iter().map(Codebook::to_file).collect(),
            weights: model
                .names
                .iter()
                .zip(&model.weights)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Format(format!(
                "expected {CHECKPOINT_FORMAT} version {CHECKPOINT_VERSION}, found {} version {}",
                self.format, self.version
            )));
        }
        let groups = self
            .codebooks
            .iter()
            .cloned()
            .map(Codebook::from_file)
            .collect::<simplexvq::Result<Vec<_>>>()?;
        let weights = self
            .weights
            .iter()
            .map(|w| Ok((w.name.clone(), Tensor::new(w.shape.clone(), w.data.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        Model::from_parts(&self.config, weights, ProductCodebook::new(groups)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| HarnessError::Io(format!("cannot open checkpoint {}: {e}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}
