//! AdamW with bias-corrected moments and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Per-parameter first and second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamW {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

/// Outcome of one optimizer step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Parameters whose update was rejected because of a non-finite gradient.
    pub skipped: Vec<usize>,
}

impl AdamW {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.m[i], &self.v[i])
    }

    /// One update at learning rate `lr`; `frozen[i]` excludes parameter `i`.
    pub fn step(&mut self, lr: f64, params: &mut [Tensor], grads: &[Tensor], frozen: &[bool]) -> StepReport {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        self.step += 1;
        let t = self.step as f64;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        let mut report = StepReport::default();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            assert_eq!(p.shape(), g.shape(), "gradient shape for parameter {i}");
            if !g.all_finite() {
                log::warn!("non-finite gradient for parameter {i}; update skipped at step {}", self.step);
                report.skipped.push(i);
                continue;
            }
            let decay = 1.0 - lr * weight_decay;
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        report
    }
}
