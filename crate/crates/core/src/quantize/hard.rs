//! Hard quantization with straight-through and rotation gradient estimators.

use super::{cosine_probs_unchecked, onehot_rows, CodebookVars, Metric, QuantizerOutput};
use crate::grad::{dot, norm};
use crate::{Error, Result, Tensor, Var};

/// Norms below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// `r = q̂ + ẑ` shorter than this is treated as the antiparallel case.
const ANTIPARALLEL_EPS: f64 = 1e-12;

/// Index of the code closest to `z`; ties go to the smallest index.
///
/// `codes` is the `M×D` code matrix. Euclid compares squared distances,
/// Cosine compares `1 - cos(z, q_m)`.
pub fn nearest_code(z: &[f64], codes: &Tensor, metric: Metric) -> Result<usize> {
    if z.len() != codes.cols() {
        return Err(Error::Dimension(format!(
            "feature has {} dims, codebook {}",
            z.len(),
            codes.cols()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite feature vector".into()));
    }
    let z_norm = norm(z);
    if metric == Metric::Cosine && z_norm < MIN_NORM {
        return Err(Error::Degenerate("zero feature vector under cosine distance".into()));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, q) in codes.row_iter().enumerate() {
        let d = match metric {
            Metric::Euclid => z.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
            Metric::Cosine => 1.0 - dot(z, q) / (z_norm * norm(q)),
        };
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    Ok(best)
}

/// [`nearest_code`] for every row of an `N×D` batch.
pub fn nearest_codes(z: &Tensor, codes: &Tensor, metric: Metric) -> Result<Vec<usize>> {
    z.row_iter().map(|row| nearest_code(row, codes, metric)).collect()
}

/// Row-major `D×D` rotation `R = I - 2 r̂ r̂ᵀ + 2 q̂ ẑᵀ` with `r = q̂ + ẑ`,
/// which maps `ẑ` onto `q̂`.
///
/// When `q̂ = -ẑ` the reflection axis is undefined and `-I` is returned.
pub fn rotation_matrix(z: &[f64], q: &[f64]) -> Vec<f64> {
    let d = z.len();
    let zn = norm(z);
    let qn = norm(q);
    let z_hat: Vec<f64> = z.iter().map(|v| v / zn).collect();
    let q_hat: Vec<f64> = q.iter().map(|v| v / qn).collect();
    let r: Vec<f64> = q_hat.iter().zip(&z_hat).map(|(a, b)| a + b).collect();
    let rn = norm(&r);
    let mut out = vec![0.0; d * d];
    if rn < ANTIPARALLEL_EPS {
        log::warn!("rotation estimator: code is antiparallel to the feature, using R = -I");
        for i in 0..d {
            out[i * d + i] = -1.0;
        }
        return out;
    }
    let r_hat: Vec<f64> = r.iter().map(|v| v / rn).collect();
    for i in 0..d {
        for j in 0..d {
            let eye = if i == j { 1.0 } else { 0.0 };
            out[i * d + j] = eye - 2.0 * r_hat[i] * r_hat[j] + 2.0 * q_hat[i] * z_hat[j];
        }
    }
    out
}

/// Straight-through quantization: forward `q_ι`, backward identity wrt `z`.
///
/// Computed as `q_ι + (z - detach(z))`, which is bitwise `q_ι`. With
/// `codebook_grad = false` the selected code is detached, so the codebook
/// only learns from the codebook loss.
pub fn ste_quantize<'t>(
    z: Var<'t>,
    cb: &CodebookVars<'t>,
    metric: Metric,
    codebook_grad: bool,
) -> Result<QuantizerOutput<'t>> {
    let tape = z.tape();
    let codes = cb.codes.value();
    let indices = tape.try_freeze_indices(|| nearest_codes(&z.value(), &codes, metric))?;
    let mut selected = cb.codes.gather_rows(&indices);
    if !codebook_grad {
        selected = selected.detach();
    }
    let quantized = selected + (z - z.detach());
    Ok(QuantizerOutput {
        pi: cosine_probs_unchecked(z, cb),
        p: tape.constant(onehot_rows(&indices, cb.size())),
        indices,
        quantized,
    })
}

/// Rotation-estimator quantization: forward `(‖q_ι‖/‖z‖) R z = q_ι`, with the
/// scaled rotation frozen so the backward pass applies its transpose to the
/// cotangent and nothing reaches the codebook.
pub fn rotation_quantize<'t>(
    z: Var<'t>,
    cb: &CodebookVars<'t>,
    metric: Metric,
) -> Result<QuantizerOutput<'t>> {
    let tape = z.tape();
    let zv = z.value();
    let (n, d) = (zv.rows(), zv.cols());
    if let Some(i) = zv.row_iter().position(|r| norm(r) < MIN_NORM) {
        return Err(Error::Degenerate(format!("feature row {i} has zero norm")));
    }
    let codes = cb.codes.value();
    let indices = tape.try_freeze_indices(|| nearest_codes(&zv, &codes, metric))?;
    let maps = tape.freeze_tensor(|| {
        let mut data = Vec::with_capacity(n * d * d);
        for (i, &m) in indices.iter().enumerate() {
            let z_i = zv.row(i);
            let q = codes.row(m);
            let scale = norm(q) / norm(z_i);
            data.extend(rotation_matrix(z_i, q).into_iter().map(|v| v * scale));
        }
        Tensor::new(vec![n, d, d], data).expect("rotation stack shape")
    });
    let quantized = apply_frozen_maps(z, maps)?;
    Ok(QuantizerOutput {
        pi: cosine_probs_unchecked(z, cb),
        p: tape.constant(onehot_rows(&indices, cb.size())),
        indices,
        quantized,
    })
}

/// `out_i = A_i z_i` for a constant stack of `D×D` maps; backward `A_iᵀ v_i`.
fn apply_frozen_maps<'t>(z: Var<'t>, maps: Tensor) -> Result<Var<'t>> {
    let shape = z.shape();
    let d = shape[1];
    z.tape().record(
        "frozen_linear_rows",
        &[z],
        &shape,
        |ins| {
            let zv = ins[0];
            let mut out = Tensor::zeros(zv.shape().to_vec());
            for i in 0..zv.rows() {
                let a = &maps.data()[i * d * d..(i + 1) * d * d];
                let zi = zv.row(i);
                for (r, o) in out.row_mut(i).iter_mut().enumerate() {
                    *o = dot(&a[r * d..(r + 1) * d], zi);
                }
            }
            out
        },
        {
            let maps = maps.clone();
            move |ct, _, _| {
                let mut g = Tensor::zeros(ct.shape().to_vec());
                for i in 0..ct.rows() {
                    let a = &maps.data()[i * d * d..(i + 1) * d * d];
                    let ci = ct.row(i);
                    let gi = g.row_mut(i);
                    for (r, &c) in ci.iter().enumerate() {
                        for (col, gv) in gi.iter_mut().enumerate() {
                            *gv += a[r * d + col] * c;
                        }
                    }
                }
                vec![g]
            }
        },
    )
}
