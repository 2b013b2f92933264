//! Learning-rate schedule: linear warmup from 0 to the peak, then cosine
//! decay from the peak to the final rate.

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCosine {
    pub peak: f64,
    pub final_lr: f64,
    pub warmup: usize,
    pub total: usize,
}

impl WarmupCosine {
    /// Rate for update number `step`, counted from 1.
    pub fn lr(&self, step: usize) -> f64 {
        if step <= self.warmup {
            return self.peak * step as f64 / self.warmup.max(1) as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let frac = ((step - self.warmup) as f64 / span as f64).min(1.0);
        self.final_lr + (self.peak - self.final_lr) * 0.5 * (1.0 + (PI * frac).cos())
    }
}
