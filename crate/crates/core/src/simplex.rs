//! Batches of points on the probability simplex.

use serde::{Deserialize, Serialize};

use crate::grad::LOG_CLAMP;
use crate::{Error, Result, Tensor};

/// Row sums and entry signs are checked to this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Whether the rows are smoothed quantizers `p` or assignment probabilities `π`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    SmoothedSample,
    AssignmentProb,
}

/// `N` rows, each an `M`-vector on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexBatch {
    rows: Tensor,
    provenance: Provenance,
}

impl SimplexBatch {
    pub fn new(rows: Tensor, provenance: Provenance) -> Result<Self> {
        if rows.shape().len() != 2 || rows.rows() == 0 || rows.cols() == 0 {
            return Err(Error::NotSimplex(format!(
                "expected a nonempty N x M matrix, got shape {:?}",
                rows.shape()
            )));
        }
        for (i, row) in rows.row_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < -SIMPLEX_TOL) {
                return Err(Error::NotSimplex(format!("row {i} has entry {v}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::NotSimplex(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { rows, provenance })
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?, provenance)
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of simplex coordinates `M`.
    pub fn width(&self) -> usize {
        self.rows.cols()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.row_iter()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.rows
    }

    /// Batch mean `π̄`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.width()];
        for row in self.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// `exp(H(p)) / M` with `H` the entropy in nats, logs clamped at `1e-12`.
pub fn normalized_perplexity(p: &[f64]) -> f64 {
    let h: f64 = -p.iter().map(|&v| v * v.max(LOG_CLAMP).ln()).sum::<f64>();
    h.exp() / p.len() as f64
}
