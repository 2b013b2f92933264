//! Small MLP encoder/decoder and a causal context network.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use simplexvq::quantize::{Codebook, CodebookVars, ProductCodebook};
use simplexvq::{Tape, Tensor, Var};

use crate::config::{CodebookConfig, CodebookInit, RunConfig, Task};
use crate::{HarnessError, Result};

/// Fully connected layers with `tanh` between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
}

fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("finite bound");
    Tensor::matrix(fan_in, fan_out, (0..fan_in * fan_out).map(|_| u.sample(rng)).collect())
}

impl Mlp {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        Self { dims }
    }

    /// Two tensors per layer: `in × out` weights and an `out` bias.
    pub fn param_count(&self) -> usize {
        2 * (self.dims.len() - 1)
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Tensor> {
        self.dims
            .windows(2)
            .flat_map(|w| [xavier(w[0], w[1], rng), Tensor::zeros(vec![w[1]])])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.dims.len() - 1)
            .flat_map(|i| [format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")])
            .collect()
    }

    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Var<'t> {
        let layers = self.dims.len() - 1;
        let mut h = x;
        for i in 0..layers {
            h = h.matmul(params[2 * i]).add_row(params[2 * i + 1]);
            if i + 1 < layers {
                h = h.tanh();
            }
        }
        h
    }
}

/// `y_t = W_out tanh(W_0 x_t + W_1 x_{t-1} + W_2 x_{t-2} + b) + b_out`
/// within each sequence, with masked frames replaced by a learned embedding
/// (random at init so that a masked first frame still gets a nonzero context).
#[derive(Clone, Debug, PartialEq)]
pub struct ContextNet {
    dim: usize,
    width: usize,
}

pub const CONTEXT_SHIFTS: usize = 2;

impl ContextNet {
    pub fn new(dim: usize, width: usize) -> Self {
        Self { dim, width }
    }

    pub fn param_count(&self) -> usize {
        CONTEXT_SHIFTS + 6
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Tensor> {
        let scale = (self.dim as f64).sqrt().recip();
        let mask = (0..self.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut out = vec![Tensor::vector(mask)];
        for _ in 0..=CONTEXT_SHIFTS {
            out.push(xavier(self.dim, self.width, rng));
        }
        out.push(Tensor::zeros(vec![self.width]));
        out.push(xavier(self.width, self.dim, rng));
        out.push(Tensor::zeros(vec![self.dim]));
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["context.mask".to_string()];
        names.extend((0..=CONTEXT_SHIFTS).map(|s| format!("context.shift{s}.weight")));
        names.extend(["context.bias", "context.out.weight", "context.out.bias"].map(String::from));
        names
    }

    /// `x` holds `n_seq` sequences of `seq_len` frames back to back.
    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>, mask: &[bool], seq_len: usize) -> Var<'t> {
        let rows = x.shape()[0];
        let xin = x.replace_rows(mask, params[0]);
        let mut h = xin.matmul(params[1]);
        for s in 1..=CONTEXT_SHIFTS {
            let idx: Vec<Option<usize>> = (0..rows).map(|r| (r % seq_len >= s).then(|| r - s)).collect();
            h = h + xin.gather_rows_or_zero(&idx).matmul(params[1 + s]);
        }
        let h = h.add_row(params[CONTEXT_SHIFTS + 2]).tanh();
        h.matmul(params[CONTEXT_SHIFTS + 3]).add_row(params[CONTEXT_SHIFTS + 4])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Decoder(Mlp),
    Context(ContextNet),
}

/// Encoder, task head and product codebook with their current parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: Mlp,
    pub head: Head,
    /// Encoder parameters followed by head parameters.
    pub weights: Vec<Tensor>,
    pub names: Vec<String>,
    pub codebooks: ProductCodebook,
}

/// Model parameters registered on one tape.
pub struct ModelVars<'t> {
    pub encoder: Vec<Var<'t>>,
    pub head: Vec<Var<'t>>,
    pub codebooks: Vec<CodebookVars<'t>>,
}

impl<'t> ModelVars<'t> {
    /// Every trainable var in optimizer order.
    pub fn all(&self) -> Vec<Var<'t>> {
        let mut v = self.encoder.clone();
        v.extend(&self.head);
        for cb in &self.codebooks {
            v.push(cb.codes);
            v.push(cb.log_temperature);
        }
        v
    }
}

pub fn init_codebooks<R: Rng + ?Sized>(cfg: &CodebookConfig, log_temperature: f64, rng: &mut R) -> Result<ProductCodebook> {
    let d = cfg.group_dim();
    let mut groups = Vec::with_capacity(cfg.groups);
    for _ in 0..cfg.groups {
        let sphere = Codebook::random_sphere(cfg.size, d, rng)?;
        let mut codes = sphere.codes().clone();
        if cfg.init == CodebookInit::OutsideHull {
            for m in cfg.size - cfg.outside_codes..cfg.size {
                codes.row_mut(m).iter_mut().for_each(|v| *v *= cfg.outside_radius);
            }
        }
        groups.push(Codebook::new(codes, log_temperature)?);
    }
    Ok(ProductCodebook::new(groups)?)
}

impl Model {
    pub fn init<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.codebook.dim;
        let w = cfg.model.width;
        let encoder = Mlp::new(vec![cfg.data.dim, w, d]);
        let head = match cfg.task {
            Task::Ae => Head::Decoder(Mlp::new(vec![d, w, cfg.data.dim])),
            Task::Contrastive => Head::Context(ContextNet::new(d, w)),
        };
        let mut weights = encoder.init(rng);
        let mut names = encoder.param_names("encoder");
        match &head {
            Head::Decoder(m) => {
                weights.extend(m.init(rng));
                names.extend(m.param_names("decoder"));
            }
            Head::Context(c) => {
                weights.extend(c.init(rng));
                names.extend(c.param_names());
            }
        }
        let codebooks = init_codebooks(&cfg.codebook, cfg.temperature.init.ln(), rng)?;
        Ok(Self {
            encoder,
            head,
            weights,
            names,
            codebooks,
        })
    }

    /// Rebuilds a model from stored parameters, checking every shape.
    pub fn from_parts(cfg: &RunConfig, weights: Vec<(String, Tensor)>, codebooks: ProductCodebook) -> Result<Self> {
        let template = Self::init(cfg, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        if weights.len() != template.weights.len() {
            return Err(HarnessError::Format(format!(
                "checkpoint holds {} weight tensors, config implies {}",
                weights.len(),
                template.weights.len()
            )));
        }
        for ((name, t), (want_name, want)) in weights.iter().zip(template.names.iter().zip(&template.weights)) {
            if name != want_name || t.shape() != want.shape() {
                return Err(HarnessError::Format(format!(
                    "weight {name} {:?} does not match {want_name} {:?}",
                    t.shape(),
                    want.shape()
                )));
            }
        }
        let same_codebooks = codebooks.groups().len() == template.codebooks.groups().len()
            && codebooks
                .groups()
                .iter()
                .zip(template.codebooks.groups())
                .all(|(a, b)| a.codes().shape() == b.codes().shape());
        if !same_codebooks {
            return Err(HarnessError::Format("codebook shapes do not match the config".into()));
        }
        let (names, weights) = weights.into_iter().unzip();
        Ok(Self {
            names,
            weights,
            codebooks,
            ..template
        })
    }

    pub fn encoder_len(&self) -> usize {
        self.encoder.param_count()
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> ModelVars<'t> {
        let reg = |t: &Tensor| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
        let vars: Vec<Var<'t>> = self.weights.iter().map(reg).collect();
        let (enc, head) = vars.split_at(self.encoder_len());
        ModelVars {
            encoder: enc.to_vec(),
            head: head.to_vec(),
            codebooks: if trainable {
                self.codebooks.on_tape(tape)
            } else {
                self.codebooks.constants(tape)
            },
        }
    }

    /// All parameters in optimizer order.
    pub fn flat_params(&self) -> Vec<Tensor> {
        let mut v = self.weights.clone();
        for cb in self.codebooks.groups() {
            v.push(cb.codes().clone());
            v.push(Tensor::scalar(cb.log_temperature()));
        }
        v
    }

    /// Inverse of [`Model::flat_params`].
    pub fn set_flat_params(&mut self, mut params: Vec<Tensor>) -> Result<()> {
        let nw = self.weights.len();
        let cb_params = params.split_off(nw);
        self.weights = params;
        for (cb, pair) in self.codebooks.groups_mut().iter_mut().zip(cb_params.chunks(2)) {
            cb.set_params(pair[0].clone(), pair[1].item())?;
        }
        Ok(())
    }

    /// Optimizer-order flags marking each `log τ`.
    pub fn temperature_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.weights.len()];
        for _ in self.codebooks.groups() {
            m.push(false);
            m.push(true);
        }
        m
    }

    pub fn set_temperature(&mut self, tau: f64) -> Result<()> {
        for cb in self.codebooks.groups_mut() {
            let codes = cb.codes().clone();
            cb.set_params(codes, tau.ln())?;
        }
        Ok(())
    }

    pub fn encode<'t>(&self, vars: &ModelVars<'t>, x: Var<'t>) -> Var<'t> {
        self.encoder.forward(&vars.encoder, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_shapes_and_init() {
        let mlp = Mlp::new(vec![3, 5, 2]);
        let params = mlp.init(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(params.len(), mlp.param_count());
        assert_eq!(params[0].shape(), &[3, 5]);
        assert_eq!(params[3].shape(), &[2]);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(params[0].data().iter().all(|v| v.abs() <= bound));
        let tape = Tape::new();
        let vars: Vec<_> = params.into_iter().map(|p| tape.leaf(p)).collect();
        let y = mlp.forward(&vars, tape.constant(Tensor::zeros(vec![4, 3])));
        assert_eq!(y.shape(), vec![4, 2]);
    }

    #[test]
    fn context_is_causal_within_sequences() {
        let net = ContextNet::new(2, 4);
        let params = net.init(&mut ChaCha8Rng::seed_from_u64(1));
        let run = |x: Tensor| {
            let tape = Tape::new();
            let vars: Vec<_> = params.iter().map(|p| tape.constant(p.clone())).collect();
            net.forward(&vars, tape.constant(x), &[false; 8], 4).to_tensor()
        };
        let base = Tensor::matrix(8, 2, (0..16).map(|v| v as f64 * 0.1).collect());
        let mut changed = base.clone();
        changed.row_mut(2).copy_from_slice(&[5.0, -5.0]);
        let (a, b) = (run(base), run(changed));
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_ne!(a.row(3), b.row(3));
        for r in 5..8 {
            assert_eq!(a.row(r), b.row(r));
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let cfg = RunConfig::from_toml("task = \"contrastive\"\nepochs = 1\nbatch_size = 2\n[codebook]\ngroups = 2\nsize = 8\n").unwrap();
        let mut model = Model::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let flat = model.flat_params();
        assert_eq!(flat.len(), model.temperature_mask().len());
        let copy = model.clone();
        model.set_flat_params(flat).unwrap();
        assert_eq!(model, copy);
    }

    #[test]
    fn outside_hull_codes_sit_far_out() {
        let cfg = CodebookConfig {
            init: CodebookInit::OutsideHull,
            ..CodebookConfig::default()
        };
        let pcb = init_codebooks(&cfg, 0.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cb = &pcb.groups()[0];
        let norm = |m: usize| cb.code(m).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm(0) - 1.0).abs() < 1e-12);
        assert!((norm(15) - 10.0).abs() < 1e-9);
    }
}
