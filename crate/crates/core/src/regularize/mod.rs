//! Regularization terms added to the main loss.

mod knn;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use knn::{
    knn_loss, knn_loss_value, knn_select, sample_vertices, select_neighbors, shard_ranges, KnnMetric, KnnRegConfig,
    KnnSelection,
};

use crate::simplex::{Provenance, SimplexBatch};
use crate::{Error, Result, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardRegConfig {
    /// Commitment weight.
    pub beta: f64,
}

impl Default for HardRegConfig {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

impl HardRegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!("hard.beta = {} must be finite and positive", self.beta)));
        }
        Ok(())
    }
}

/// Commitment plus codebook loss,
/// `N⁻¹ Σ_i [β‖z_i − sg(q_ι)‖² + ‖sg(z_i) − q_ι‖²]`.
///
/// `codes` is the `M×D` code matrix; only the selected rows receive gradient.
pub fn hard_loss<'t>(z: Var<'t>, codes: Var<'t>, indices: &[usize], cfg: &HardRegConfig) -> Result<Var<'t>> {
    cfg.validate()?;
    let (zs, cs) = (z.shape(), codes.shape());
    if zs[0] != indices.len() || zs[1] != cs[1] {
        return Err(Error::Dimension(format!(
            "hard loss got {} indices for features {zs:?} and codes {cs:?}",
            indices.len()
        )));
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= cs[0]) {
        return Err(Error::IndexOutOfRange { index, len: cs[0] });
    }
    let q = codes.gather_rows(indices);
    let commitment = (z - q.detach()).square().sum().scale(cfg.beta);
    let codebook = (z.detach() - q).square().sum();
    Ok((commitment + codebook).scale(1.0 / indices.len() as f64))
}

/// `1 − exp(H(π̄))/M` for the `N×M` assignment probabilities `pi`.
pub fn ppl_loss<'t>(pi: Var<'t>) -> Var<'t> {
    let m = pi.shape()[1] as f64;
    let mean = pi.mean_rows();
    let entropy = -(mean * mean.log_clamped()).sum();
    entropy.exp().scale(1.0 / m).rsub_scalar(1.0)
}

/// [`ppl_loss`] on plain values.
pub fn ppl_loss_value(batch: &SimplexBatch) -> f64 {
    let tape = Tape::new();
    ppl_loss(tape.constant(batch.tensor().clone())).item()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    #[default]
    None,
    Hard,
    Ppl,
    KnnL2,
    KnnCe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegConfig {
    pub kind: RegKind,
    /// Multiplier on the regularization term.
    pub weight: f64,
    pub hard: HardRegConfig,
    /// Neighbour settings; `metric` is overridden by `kind`.
    pub knn: KnnRegConfig,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            kind: RegKind::None,
            weight: 1.0,
            hard: HardRegConfig::default(),
            knn: KnnRegConfig::default(),
        }
    }
}

impl RegConfig {
    /// KNN settings with the metric implied by `kind`.
    pub fn knn_config(&self) -> KnnRegConfig {
        let metric = match self.kind {
            RegKind::KnnL2 => KnnMetric::L2,
            RegKind::KnnCe => KnnMetric::Ce,
            _ => self.knn.metric,
        };
        KnnRegConfig { metric, ..self.knn }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::Config(format!("regularizer.weight = {} must be finite and >= 0", self.weight)));
        }
        match self.kind {
            RegKind::Hard => self.hard.validate(),
            RegKind::KnnL2 | RegKind::KnnCe => self.knn.validate(),
            RegKind::None | RegKind::Ppl => Ok(()),
        }
    }
}

/// Whatever a regularizer may need from one quantizer call.
#[derive(Clone, Debug, Default)]
pub struct RegInputs<'a, 't> {
    pub z: Option<Var<'t>>,
    pub codes: Option<Var<'t>>,
    pub indices: Option<&'a [usize]>,
    pub pi: Option<Var<'t>>,
    pub p: Option<Var<'t>>,
}

fn require<T>(v: Option<T>, what: &str, kind: RegKind) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("regularizer {kind:?} needs {what}")))
}

/// Weighted regularization term for `cfg.kind`; zero for `None`.
pub fn reg_dispatch<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    cfg: &RegConfig,
    inputs: &RegInputs<'_, 't>,
    rng: &mut R,
) -> Result<Var<'t>> {
    cfg.validate()?;
    let kind = cfg.kind;
    let term = match kind {
        RegKind::None => return Ok(tape.scalar(0.0)),
        RegKind::Hard => hard_loss(
            require(inputs.z, "features", kind)?,
            require(inputs.codes, "codes", kind)?,
            require(inputs.indices, "code indices", kind)?,
            &cfg.hard,
        )?,
        RegKind::Ppl => ppl_loss(require(inputs.pi, "assignment probabilities", kind)?),
        RegKind::KnnL2 | RegKind::KnnCe => {
            let knn = cfg.knn_config();
            let target = match knn.target {
                Provenance::SmoothedSample => require(inputs.p, "smoothed samples", kind)?,
                Provenance::AssignmentProb => require(inputs.pi, "assignment probabilities", kind)?,
            };
            knn_loss(target, &knn, rng)?
        }
    };
    Ok(if cfg.weight == 1.0 { term } else { term.scale(cfg.weight) })
}
