//! Evaluation under hard quantization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use simplexvq::diagnostics::{codebook_usage, export_scatter, mean_perplexity, onehotness, UsageReport};
use simplexvq::quantize::{assignment_prob_values, product_quantize};
use simplexvq::simplex::{Provenance, SimplexBatch};
use simplexvq::{Tape, Tensor, Var};

use crate::config::{RunConfig, Task};
use crate::data::{ClusterData, SequenceData};
use crate::model::{Head, Model};
use crate::tasks::{choose_mask, contrastive_accuracy, sample_distractors};
use crate::{HarnessError, Result};

#[derive(Clone, Copy, Debug)]
pub enum EvalData<'a> {
    Clusters(&'a ClusterData),
    Sequences(&'a SequenceData),
}

impl EvalData<'_> {
    fn features(&self) -> &Tensor {
        match self {
            Self::Clusters(d) => &d.items,
            Self::Sequences(d) => &d.frames,
        }
    }

    /// Cluster label of each item, or hidden state of each frame.
    fn labels(&self) -> Vec<String> {
        match self {
            Self::Clusters(d) => d.labels.iter().map(usize::to_string).collect(),
            Self::Sequences(d) => d.states.iter().map(usize::to_string).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// One report per codebook group.
    pub usage: Vec<UsageReport>,
    /// Onehotness of the assignment probabilities, per group.
    pub onehotness: Vec<f64>,
    /// Normalized perplexity of the mean assignment probabilities, per group.
    pub mean_perplexity: Vec<f64>,
    /// Reconstruction rMSE under hard quantization.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hard_rmse: Option<f64>,
    /// Reconstruction rMSE through the training-time quantizer.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub soft_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

fn rmse(a: &Tensor, b: &Tensor) -> f64 {
    let se: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    (se / a.numel() as f64).sqrt()
}

/// Usage and smoothing statistics plus the task metric. `seed` fixes the
/// training-mode quantizer noise and the contrastive masks.
pub fn evaluate(model: &Model, cfg: &RunConfig, data: EvalData<'_>, seed: u64) -> Result<EvalMetrics> {
    let x = data.features();
    if x.cols() != cfg.data.dim {
        return Err(HarnessError::Config(format!(
            "dataset has {} features, model expects {}",
            x.cols(),
            cfg.data.dim
        )));
    }
    match (cfg.task, &data) {
        (Task::Ae, EvalData::Clusters(_)) | (Task::Contrastive, EvalData::Sequences(_)) => {}
        _ => return Err(HarnessError::Config("dataset kind does not match the task".into())),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tape = Tape::new();
    let vars = model.on_tape(&tape, false);
    let xv = tape.constant(x.clone());
    let z = model.encode(&vars, xv);
    let zt = z.to_tensor();
    let indices = model.codebooks.hard_indices(&zt, &cfg.quantizer)?;
    let hard = model.codebooks.decode(&indices);
    let soft = product_quantize(z, &vars.codebooks, &cfg.quantizer, &mut rng)?;

    let mut usage = Vec::new();
    let mut oh = Vec::new();
    let mut ppl = Vec::new();
    for (g, cb) in model.codebooks.groups().iter().enumerate() {
        usage.push(codebook_usage(&indices[g], cb.size())?);
        let pi = SimplexBatch::new(soft.groups[g].pi.to_tensor(), Provenance::AssignmentProb)?;
        oh.push(onehotness(&pi));
        ppl.push(mean_perplexity(&pi));
    }
    let mut metrics = EvalMetrics {
        usage,
        onehotness: oh,
        mean_perplexity: ppl,
        hard_rmse: None,
        soft_rmse: None,
        accuracy: None,
    };
    match (&model.head, data) {
        (Head::Decoder(dec), EvalData::Clusters(_)) => {
            let recon_hard = dec.forward(&vars.head, tape.constant(hard)).to_tensor();
            let recon_soft = dec.forward(&vars.head, soft.quantized).to_tensor();
            metrics.hard_rmse = Some(rmse(&recon_hard, x));
            metrics.soft_rmse = Some(rmse(&recon_soft, x));
        }
        (Head::Context(net), EvalData::Sequences(seqs)) => {
            let s = &cfg.contrastive;
            let masked = choose_mask(x.rows(), s.mask_fraction, &mut rng);
            let candidates = sample_distractors(masked.len(), s.distractors, &mut rng)?;
            let mut flags = vec![false; x.rows()];
            masked.iter().for_each(|&i| flags[i] = true);
            let context: Var<'_> = net.forward(&vars.head, z, &flags, seqs.seq_len);
            let y = context.to_tensor();
            let pick = |t: &Tensor| Tensor::from_rows(&masked.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>());
            let codes: Vec<Vec<usize>> = masked.iter().map(|&i| indices.iter().map(|g| g[i]).collect()).collect();
            metrics.accuracy = Some(contrastive_accuracy(&pick(&y)?, &pick(&hard)?, &candidates, &codes));
        }
        _ => unreachable!("task and head agree by construction"),
    }
    Ok(metrics)
}
/// Writes the assignment probabilities of every group over `data` to
/// `group<g>.csv` in `dir`. Every group must have exactly three codes.
pub fn export_assignment_scatter(model: &Model, data: EvalData<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    let tape = Tape::new();
    let vars = model.on_tape(&tape, false);
    let z = model.encode(&vars, tape.constant(data.features().clone())).to_tensor();
    let labels = data.labels();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (g, ((start, len), cb)) in model.codebooks.splits().into_iter().zip(model.codebooks.groups()).enumerate() {
        let cols: Vec<Vec<f64>> = z.row_iter().map(|r| r[start..start + len].to_vec()).collect();
        let pi = assignment_prob_values(&Tensor::from_rows(&cols)?, cb)?;
        let path = dir.join(format!("group{g}.csv"));
        export_scatter(&SimplexBatch::new(pi, Provenance::AssignmentProb)?, &labels, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
