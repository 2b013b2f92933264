use rand::seq::index;
use rand::Rng;
use simplexvq::quantize::{product_quantize, ProductOutput};
use simplexvq::{Tape, Tensor, Var};

use super::{compose, group_regularizer, StepLosses};
use crate::config::RunConfig;
use crate::model::{Head, Model, ModelVars};
use crate::{HarnessError, Result};

/// Frames masked independently with probability `fraction`.
pub fn choose_mask<R: Rng + ?Sized>(rows: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    (0..rows).filter(|_| rng.random::<f64>() < fraction).collect()
}

/// For each of `n` masked positions, the position itself followed by
/// `count` distinct other positions drawn uniformly.
pub fn sample_distractors<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if n < count + 1 {
        return Err(HarnessError::Config(format!(
            "{n} masked positions cannot supply {count} distractors each; raise the batch size or mask fraction"
        )));
    }
    Ok((0..n)
        .map(|j| {
            let mut c = vec![j];
            c.extend(index::sample(rng, n - 1, count).into_iter().map(|i| if i >= j { i + 1 } else { i }));
            c
        })
        .collect())
}

/// `mean_j −log softmax_c(cos(y_j, q_c) / T)[target]`, where `candidates[j]`
/// lists rows of `q` with the target first.
pub fn contrastive_loss<'t>(y: Var<'t>, q: Var<'t>, candidates: &[Vec<usize>], temperature: f64) -> Result<Var<'t>> {
    let (n, width) = (candidates.len(), candidates.first().map_or(0, Vec::len));
    if n == 0 || candidates.iter().any(|c| c.len() != width) {
        return Err(HarnessError::Config("candidate lists must be nonempty and of equal length".into()));
    }
    if y.shape()[0] != n {
        return Err(HarnessError::Config(format!("{} predictions for {n} candidate lists", y.shape()[0])));
    }
    let sim = y.l2_normalize_rows().matmul_t(q.l2_normalize_rows()).scale(1.0 / temperature);
    let pairs: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.iter().map(move |&k| (j, k)))
        .collect();
    let logits = sim.gather_elements(&pairs).reshape(&[n, width]);
    let target: Vec<(usize, usize)> = (0..n).map(|j| (j, 0)).collect();
    Ok(-logits.log_softmax_rows().gather_elements(&target).mean())
}

/// Share of positions whose target beats every distractor carrying a
/// different code. `codes[k]` identifies the hard code of row `k`.
pub fn contrastive_accuracy(y: &Tensor, q: &Tensor, candidates: &[Vec<usize>], codes: &[Vec<usize>]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb).max(1e-300)
    };
    let hits = candidates
        .iter()
        .enumerate()
        .filter(|(j, c)| {
            let target = cos(y.row(*j), q.row(c[0]));
            c[1..]
                .iter()
                .filter(|&&k| codes[k] != codes[c[0]])
                .all(|&k| cos(y.row(*j), q.row(k)) < target)
        })
        .count();
    hits as f64 / candidates.len().max(1) as f64
}

pub struct ContrastiveForward<'t> {
    pub features: Var<'t>,
    pub quantized: ProductOutput<'t>,
    pub context: Var<'t>,
    pub masked: Vec<usize>,
    pub candidates: Vec<Vec<usize>>,
}

/// Masked prediction of quantized targets over a batch of whole sequences.
pub fn contrastive_step<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    model: &Model,
    vars: &ModelVars<'t>,
    frames: &Tensor,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<(StepLosses<'t>, ContrastiveForward<'t>)> {
    let Head::Context(context_net) = &model.head else {
        panic!("the contrastive task needs a context head");
    };
    let s = &cfg.contrastive;
    let rows = frames.rows();
    let x = tape.constant(frames.clone());
    let features = model.encode(vars, x);
    let quantized = product_quantize(features, &vars.codebooks, &cfg.quantizer, rng)?;
    let masked = tape.freeze_indices(|| choose_mask(rows, s.mask_fraction, rng));
    let candidates = tape.try_freeze_indices(|| {
        sample_distractors(masked.len(), s.distractors, rng).map(|c| c.concat())
    })?;
    let candidates: Vec<Vec<usize>> = candidates.chunks(s.distractors + 1).map(<[usize]>::to_vec).collect();
    let mut flags = vec![false; rows];
    masked.iter().for_each(|&i| flags[i] = true);
    let context = context_net.forward(&vars.head, features, &flags, s.seq_len);
    let main = contrastive_loss(
        context.gather_rows(&masked),
        quantized.quantized.gather_rows(&masked),
        &candidates,
        s.logit_temperature,
    )?;
    let reg = group_regularizer(tape, &cfg.regularizer, features, &vars.codebooks, &quantized, rng)?;
    Ok((
        compose(main, reg, cfg.regularizer.weight),
        ContrastiveForward {
            features,
            quantized,
            context,
            masked,
            candidates,
        },
    ))
}
