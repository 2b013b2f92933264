//! The shipped gradient-check suite behind `simplexvq grad-check`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use simplexvq::grad::finite_diff_check;
use simplexvq::quantize::{assignment_probs, quantize, CodebookVars, QuantizerMode, QuantizerSettings};
use simplexvq::regularize::{hard_loss, knn_loss, ppl_loss, HardRegConfig, KnnMetric, KnnRegConfig};
use simplexvq::simplex::Provenance;
use simplexvq::{Tape, Tensor, Var};

use crate::tasks::contrastive_loss;
use crate::Result;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_INSTANCES: usize = 20;

/// Worst case of one op over all instances.
#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub eps: f64,
    pub tol: f64,
    pub ops: Vec<OpCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(|o| o.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:>9} {:>12}  result", "op", "instances", "max_rel_err")?;
        for o in &self.ops {
            writeln!(
                f,
                "{:<28} {:>9} {:>12.3e}  {}",
                o.op,
                o.instances,
                o.max_rel_err,
                if o.passed { "PASS" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "overall: {} (tol {:.1e}, eps {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tol,
            self.eps
        )
    }
}

pub const OPS: [&str; 8] = [
    "assignment_probs",
    "smooth_quantize/softmax",
    "smooth_quantize/soft_gumbel",
    "hard_loss",
    "ppl_loss",
    "knn_loss/l2",
    "knn_loss/ce",
    "contrastive_loss",
];

fn randn(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

/// Scalar projection `Σ x ⊙ w`, so every output entry is exercised.
fn project<'t>(x: Var<'t>, w: &Tensor) -> Var<'t> {
    (x * x.tape().constant(w.clone())).sum()
}

fn codebook<'t>(v: &[Var<'t>]) -> CodebookVars<'t> {
    CodebookVars {
        codes: v[1],
        log_temperature: v[2],
    }
}

fn check(
    op: &str,
    seed: u64,
    eps: f64,
    tol: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = match op {
        "assignment_probs" => {
            let (n, m, d) = (4, 5, 3);
            let w = randn(n, m, &mut rng);
            let params = [randn(n, d, &mut rng), randn(m, d, &mut rng), Tensor::scalar(rng.random_range(-1.0..0.5))];
            finite_diff_check(|_, v| Ok(project(assignment_probs(v[0], &codebook(v))?, &w)), &params, eps, tol)?
        }
        "smooth_quantize/softmax" | "smooth_quantize/soft_gumbel" => {
            let mode = if op.ends_with("softmax") {
                QuantizerMode::Softmax
            } else {
                QuantizerMode::SoftGumbel
            };
            let settings = QuantizerSettings {
                mode,
                gumbel_temperature: 0.7,
                ..QuantizerSettings::default()
            };
            let (n, m, d) = (4, 5, 4);
            let w = randn(n, d, &mut rng);
            let params = [randn(n, d, &mut rng), randn(m, d, &mut rng), Tensor::scalar(rng.random_range(-1.0..0.5))];
            let noise_seed: u64 = rng.random();
            finite_diff_check(
                |_, v| {
                    let mut r = ChaCha8Rng::seed_from_u64(noise_seed);
                    Ok(project(quantize(v[0], &codebook(v), &settings, &mut r)?.quantized, &w))
                },
                &params,
                eps,
                tol,
            )?
        }
        "hard_loss" => {
            let (n, m, d) = (6, 4, 3);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let cfg = HardRegConfig {
                beta: rng.random_range(0.25..2.0),
            };
            let params = [randn(n, d, &mut rng), randn(m, d, &mut rng)];
            finite_diff_check(|_, v| hard_loss(v[0], v[1], &indices, &cfg), &params, eps, tol)?
        }
        "ppl_loss" => {
            let params = [randn(6, 4, &mut rng)];
            finite_diff_check(|_, v| Ok(ppl_loss(v[0].softmax_rows())), &params, eps, tol)?
        }
        "knn_loss/l2" | "knn_loss/ce" => {
            let cfg = KnnRegConfig {
                k: 4,
                metric: if op.ends_with("l2") { KnnMetric::L2 } else { KnnMetric::Ce },
                shards: 1 + (seed % 2) as usize,
                target: Provenance::SmoothedSample,
                vertex_subsample: 1.0,
            };
            let params = [randn(12, 5, &mut rng)];
            finite_diff_check(
                |_: &Tape, v| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    knn_loss(v[0].scale(2.0).softmax_rows(), &cfg, &mut r)
                },
                &params,
                eps,
                tol,
            )?
        }
        "contrastive_loss" => {
            let (n, d, distractors) = (8, 4, 3);
            let candidates = crate::tasks::sample_distractors(n, distractors, &mut rng)?;
            let params = [randn(n, d, &mut rng), randn(n, d, &mut rng)];
            finite_diff_check(
                |_, v| {
                    contrastive_loss(v[0], v[1], &candidates, 0.1)
                        .map_err(|e| simplexvq::Error::Config(e.to_string()))
                },
                &params,
                eps,
                tol,
            )?
        }
        other => unreachable!("unknown op {other}"),
    };
    Ok(report.max_rel_err())
}

/// Runs every op of [`OPS`] on `instances` seeded random inputs.
pub fn run_suite(eps: f64, tol: f64, instances: usize) -> Result<SuiteReport> {
    let ops = OPS
        .iter()
        .map(|&op| {
            let mut worst: f64 = 0.0;
            for seed in 0..instances as u64 {
                worst = worst.max(check(op, seed, eps, tol)?);
            }
            Ok(OpCheck {
                op,
                instances,
                max_rel_err: worst,
                passed: worst <= tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport { eps, tol, ops })
}
