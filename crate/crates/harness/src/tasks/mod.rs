//! Per-step losses of the two toy tasks.

mod ae;
mod contrastive;

pub use ae::{ae_forward, ae_step, AeForward};
pub use contrastive::{
    choose_mask, contrastive_accuracy, contrastive_loss, contrastive_step, sample_distractors, ContrastiveForward,
};

use rand::Rng;
use simplexvq::quantize::{CodebookVars, ProductOutput};
use simplexvq::regularize::{reg_dispatch, RegConfig, RegInputs};
use simplexvq::{Tape, Var};

use crate::Result;

/// Scalar losses of one step. `total = main + weight · reg`.
#[derive(Clone, Copy, Debug)]
pub struct StepLosses<'t> {
    pub main: Var<'t>,
    /// Unweighted regularization term, summed over codebook groups.
    pub reg: Var<'t>,
    pub total: Var<'t>,
}

pub(crate) fn compose<'t>(main: Var<'t>, reg: Var<'t>, weight: f64) -> StepLosses<'t> {
    StepLosses {
        main,
        reg,
        total: main + reg.scale(weight),
    }
}

/// Sum over groups of the configured regularizer, without the weight.
pub fn group_regularizer<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    cfg: &RegConfig,
    z: Var<'t>,
    codebooks: &[CodebookVars<'t>],
    out: &ProductOutput<'t>,
    rng: &mut R,
) -> Result<Var<'t>> {
    let unit = RegConfig { weight: 1.0, ..*cfg };
    let mut start = 0;
    let mut total: Option<Var<'t>> = None;
    for (cb, g) in codebooks.iter().zip(&out.groups) {
        let d = cb.dim();
        let zg = if codebooks.len() == 1 { z } else { z.slice_cols(start, d) };
        start += d;
        let inputs = RegInputs {
            z: Some(zg),
            codes: Some(cb.codes),
            indices: Some(&g.indices),
            pi: Some(g.pi),
            p: Some(g.p),
        };
        let term = reg_dispatch(tape, &unit, &inputs, rng)?;
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    Ok(total.unwrap_or_else(|| tape.scalar(0.0)))
}
