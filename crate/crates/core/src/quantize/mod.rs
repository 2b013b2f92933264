//! Codebooks and the five quantization pathways.
//!
//! | mode         | forward                      | backward                          |
//! |--------------|------------------------------|-----------------------------------|
//! | `Ste`        | nearest code `q_ι`           | identity wrt `z`                  |
//! | `Rotation`   | nearest code `q_ι`           | frozen `(‖q_ι‖/‖z‖) R` wrt `z`    |
//! | `Softmax`    | `Q π`, `π = softmax(cos/τ)`  | exact                             |
//! | `SoftGumbel` | `Q p`, `p` Gumbel-softmax    | through the softmax, noise frozen |
//! | `HardGumbel` | onehot of the Gumbel sample  | identity wrt `p`                  |
//!
//! Batches are `N×D` matrices with one feature per row; codebooks are `M×D`
//! with one code per row.

mod codebook;
mod hard;
mod product;
mod smooth;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use codebook::{Codebook, CodebookFile, CodebookVars, CODEBOOK_FORMAT, CODEBOOK_VERSION};
pub use hard::{nearest_code, nearest_codes, rotation_matrix, rotation_quantize, ste_quantize, MIN_NORM};
pub use product::{product_quantize, ProductCodebook, ProductOutput};
pub use smooth::{
    assignment_probs, gumbel, gumbel_argmax, gumbel_noise, gumbel_sample, gumbel_sample_with_noise,
    hard_gumbel, hard_inference, hard_inference_rows, onehot, smooth_quantize, U_CLAMP,
};

use crate::grad::{norm, softmax_in_place};
use crate::{Result, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclid,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMode {
    Ste,
    Rotation,
    Softmax,
    SoftGumbel,
    HardGumbel,
}

impl QuantizerMode {
    pub fn is_hard(self) -> bool {
        matches!(self, Self::Ste | Self::Rotation)
    }

    pub fn is_gumbel(self) -> bool {
        matches!(self, Self::SoftGumbel | Self::HardGumbel)
    }

    fn smooth(self) -> Option<SmoothMode> {
        match self {
            Self::Softmax => Some(SmoothMode::Softmax),
            Self::SoftGumbel => Some(SmoothMode::SoftGumbel),
            Self::HardGumbel => Some(SmoothMode::HardGumbel),
            Self::Ste | Self::Rotation => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothMode {
    Softmax,
    SoftGumbel,
    HardGumbel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerSettings {
    pub mode: QuantizerMode,
    /// Nearest-code metric of the hard modes.
    pub metric: Metric,
    /// Temperature of the Gumbel-softmax relaxation, separate from the
    /// learnable logit temperature of the codebook.
    pub gumbel_temperature: f64,
    /// Let the main loss reach the selected code through the STE expression.
    pub ste_codebook_grad: bool,
}

impl Default for QuantizerSettings {
    fn default() -> Self {
        Self {
            mode: QuantizerMode::Softmax,
            metric: Metric::Euclid,
            gumbel_temperature: 1.0,
            ste_codebook_grad: false,
        }
    }
}

/// Per-batch quantizer results.
#[derive(Clone, Debug)]
pub struct QuantizerOutput<'t> {
    /// Assignment probabilities (`N×M`). For the hard modes these are the
    /// cosine-logit probabilities, kept for diagnostics and regularizers.
    pub pi: Var<'t>,
    /// Smoothed quantizers (`N×M`); the onehot of `indices` for hard modes.
    pub p: Var<'t>,
    /// Code selected by the forward pass of each item: nearest code for
    /// hard modes, argmax of `p` otherwise.
    pub indices: Vec<usize>,
    /// Quantized features (`N×D`).
    pub quantized: Var<'t>,
}

/// Runs the configured pathway on an `N×D` batch.
pub fn quantize<'t, R: Rng + ?Sized>(
    z: Var<'t>,
    cb: &CodebookVars<'t>,
    settings: &QuantizerSettings,
    rng: &mut R,
) -> Result<QuantizerOutput<'t>> {
    match settings.mode.smooth() {
        Some(mode) => smooth_quantize(z, cb, mode, settings.gumbel_temperature, rng),
        None if settings.mode == QuantizerMode::Ste => {
            ste_quantize(z, cb, settings.metric, settings.ste_codebook_grad)
        }
        None => rotation_quantize(z, cb, settings.metric),
    }
}

/// Inference-time hard codes: the nearest code for hard modes, argmax of
/// `π` for smoothed ones.
pub fn hard_indices(z: &Tensor, cb: &Codebook, settings: &QuantizerSettings) -> Result<Vec<usize>> {
    if settings.mode.is_hard() {
        nearest_codes(z, cb.codes(), settings.metric)
    } else {
        Ok(hard_inference_rows(&assignment_prob_values(z, cb)?))
    }
}

/// [`assignment_probs`] on plain values.
pub fn assignment_prob_values(z: &Tensor, cb: &Codebook) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = cb.constants(&tape);
    Ok(assignment_probs(tape.constant(z.clone()), &vars)?.to_tensor())
}

/// `N×M` onehot rows.
pub fn onehot_rows(indices: &[usize], m: usize) -> Tensor {
    Tensor::matrix(indices.len(), m, indices.iter().flat_map(|&i| onehot(i, m)).collect())
}

/// Cosine-logit probabilities that tolerate zero feature rows (uniform row,
/// no gradient). Used by the hard pathways, which accept zero features.
pub(crate) fn cosine_probs_unchecked<'t>(z: Var<'t>, cb: &CodebookVars<'t>) -> Var<'t> {
    let zv = z.value();
    if zv.row_iter().all(|r| norm(r) > 0.0) {
        return smooth::cosine_logits(z, cb).softmax_rows();
    }
    let codes = cb.codes.value();
    let inv_tau = (-cb.log_temperature.item()).exp();
    let m = codes.rows();
    let mut out = Tensor::zeros(vec![zv.rows(), m]);
    for (i, row) in zv.row_iter().enumerate() {
        let zn = norm(row);
        let logits = out.row_mut(i);
        if zn > 0.0 {
            for (l, q) in logits.iter_mut().zip(codes.row_iter()) {
                *l = crate::grad::dot(row, q) / (zn * norm(q)) * inv_tau;
            }
        }
        softmax_in_place(logits);
    }
    z.tape().constant(out)
}
