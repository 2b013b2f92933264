//! Smoothed quantization: softmax, soft Gumbel-softmax and hard Gumbel.

use rand::Rng;

use super::{onehot_rows, CodebookVars, QuantizerOutput, SmoothMode};
use crate::grad::{norm, LOG_CLAMP};
use crate::{Error, Result, Tensor, Var};

/// Uniform draws are clamped to `(U_CLAMP, 1 - U_CLAMP)` before the double log.
pub const U_CLAMP: f64 = 1e-12;

/// `π = softmax(cos(q_m, z) / τ)` for every row of the `N×D` batch `z`.
///
/// Differentiable wrt `z`, the codes and `log τ`.
pub fn assignment_probs<'t>(z: Var<'t>, cb: &CodebookVars<'t>) -> Result<Var<'t>> {
    let zv = z.value();
    if zv.cols() != cb.dim() {
        return Err(Error::Dimension(format!(
            "features have {} dims, codebook {}",
            zv.cols(),
            cb.dim()
        )));
    }
    if let Some(i) = zv.row_iter().position(|r| norm(r) == 0.0) {
        return Err(Error::Degenerate(format!("feature row {i} is zero")));
    }
    if let Some(m) = cb.codes.value().row_iter().position(|r| norm(r) == 0.0) {
        return Err(Error::Degenerate(format!("code vector {m} is zero")));
    }
    Ok(cosine_logits(z, cb).softmax_rows())
}

pub(super) fn cosine_logits<'t>(z: Var<'t>, cb: &CodebookVars<'t>) -> Var<'t> {
    let z_hat = z.l2_normalize_rows();
    let q_hat = cb.codes.l2_normalize_rows();
    z_hat.matmul_t(q_hat).mul_scalar_var(cb.inverse_temperature())
}

/// One standard Gumbel draw, `-ln(-ln u)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(U_CLAMP, 1.0 - U_CLAMP);
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| gumbel(rng)).collect())
}

/// Gumbel-max sampling: `argmax_m (g_m + ln π_m)`, distributed as
/// `Categorical(π)`.
pub fn gumbel_argmax<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> usize {
    let scores: Vec<f64> = pi.iter().map(|&p| gumbel(rng) + p.max(LOG_CLAMP).ln()).collect();
    hard_inference(&scores)
}

/// Gumbel-softmax relaxation of a categorical draw from each row of `pi`.
///
/// The noise is drawn from `rng` once and frozen on the tape; gradients
/// flow through the softmax only.
pub fn gumbel_sample<'t, R: Rng + ?Sized>(pi: Var<'t>, gumbel_temperature: f64, rng: &mut R) -> Var<'t> {
    let shape = pi.shape();
    let noise = pi.tape().freeze_tensor(|| gumbel_noise(shape[0], shape[1], rng));
    gumbel_sample_with_noise(pi, noise, gumbel_temperature)
}

/// `softmax((ln π + g) / τ_g)` for explicit noise `g`.
pub fn gumbel_sample_with_noise<'t>(pi: Var<'t>, noise: Tensor, gumbel_temperature: f64) -> Var<'t> {
    assert!(gumbel_temperature > 0.0, "gumbel temperature must be positive");
    let g = pi.tape().constant(noise);
    (pi.log_clamped() + g).scale(1.0 / gumbel_temperature).softmax_rows()
}

/// Straight-through onehot of each row: forward `e_argmax`, backward
/// identity wrt `p`.
pub fn hard_gumbel<'t>(p: Var<'t>) -> (Var<'t>, Vec<usize>) {
    let tape = p.tape();
    let m = p.shape()[1];
    let indices = tape.freeze_indices(|| hard_inference_rows(&p.value()));
    let hard = tape.constant(onehot_rows(&indices, m)) + (p - p.detach());
    (hard, indices)
}

/// Index of the largest entry; ties go to the smallest index.
pub fn hard_inference(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn hard_inference_rows(rows: &Tensor) -> Vec<usize> {
    rows.row_iter().map(hard_inference).collect()
}

pub fn onehot(index: usize, m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[index] = 1.0;
    v
}

/// Smoothed quantization of an `N×D` batch.
///
/// `pi` is always the assignment probabilities; `p` is `pi` itself
/// (Softmax), a Gumbel-softmax sample (SoftGumbel) or its straight-through
/// onehot (HardGumbel). `quantized = p Q` with the unnormalized codes.
pub fn smooth_quantize<'t, R: Rng + ?Sized>(
    z: Var<'t>,
    cb: &CodebookVars<'t>,
    mode: SmoothMode,
    gumbel_temperature: f64,
    rng: &mut R,
) -> Result<QuantizerOutput<'t>> {
    let pi = assignment_probs(z, cb)?;
    let (p, indices) = match mode {
        SmoothMode::Softmax => (pi, hard_inference_rows(&pi.value())),
        SmoothMode::SoftGumbel => {
            let p = gumbel_sample(pi, gumbel_temperature, rng);
            let ix = hard_inference_rows(&p.value());
            (p, ix)
        }
        SmoothMode::HardGumbel => hard_gumbel(gumbel_sample(pi, gumbel_temperature, rng)),
    };
    Ok(QuantizerOutput {
        pi,
        p,
        indices,
        quantized: p.matmul(cb.codes),
    })
}
