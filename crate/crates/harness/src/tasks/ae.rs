use rand::Rng;
use simplexvq::quantize::{product_quantize, ProductOutput};
use simplexvq::{Tape, Tensor, Var};

use super::{compose, group_regularizer, StepLosses};
use crate::config::RunConfig;
use crate::model::{Head, Model, ModelVars};
use crate::Result;

pub struct AeForward<'t> {
    pub z: Var<'t>,
    pub quantized: ProductOutput<'t>,
    pub reconstruction: Var<'t>,
}

/// Encoder, training-mode quantizer and decoder on an `N × dim` batch.
pub fn ae_forward<'t, R: Rng + ?Sized>(
    model: &Model,
    vars: &ModelVars<'t>,
    x: Var<'t>,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<AeForward<'t>> {
    let Head::Decoder(decoder) = &model.head else {
        panic!("autoencoding needs a decoder head");
    };
    let z = model.encode(vars, x);
    let quantized = product_quantize(z, &vars.codebooks, &cfg.quantizer, rng)?;
    let reconstruction = decoder.forward(&vars.head, quantized.quantized);
    Ok(AeForward {
        z,
        quantized,
        reconstruction,
    })
}

/// Mean squared reconstruction error plus the configured regularizer.
pub fn ae_step<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    model: &Model,
    vars: &ModelVars<'t>,
    batch: &Tensor,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<(StepLosses<'t>, AeForward<'t>)> {
    let x = tape.constant(batch.clone());
    let fwd = ae_forward(model, vars, x, cfg, rng)?;
    let main = (fwd.reconstruction - x).square().mean();
    let reg = group_regularizer(tape, &cfg.regularizer, fwd.z, &vars.codebooks, &fwd.quantized, rng)?;
    Ok((compose(main, reg, cfg.regularizer.weight), fwd))
}
