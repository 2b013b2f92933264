//! KNN-to-vertex loss.
//!
//! For every sampled vertex `e_m` the `K` batch rows closest to it are
//! selected (`K/S` per contiguous shard) and their mean deviation from the
//! vertex is penalized. Selection is frozen on the tape; the loss is
//! differentiable through the selected rows.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grad::LOG_CLAMP;
use crate::quantize::onehot_rows;
use crate::simplex::{Provenance, SimplexBatch};
use crate::{Error, Result, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMetric {
    /// Squared distance `‖p - e_m‖²`.
    L2,
    /// Cross-entropy `-ln p_m`.
    #[default]
    Ce,
}

impl KnnMetric {
    /// Deviation of `row` from vertex `m`.
    pub fn deviation(self, row: &[f64], m: usize) -> f64 {
        match self {
            Self::L2 => row
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let d = v - if j == m { 1.0 } else { 0.0 };
                    d * d
                })
                .sum(),
            Self::Ce => -row[m].max(LOG_CLAMP).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnRegConfig {
    /// Neighbours per vertex, summed over shards.
    pub k: usize,
    pub metric: KnnMetric,
    /// Number of contiguous batch partitions; must divide `k`.
    pub shards: usize,
    /// Regularize the smoothed samples `p` or the assignment probabilities `π`.
    pub target: Provenance,
    /// Fraction of vertices drawn per step, in `(0, 1]`.
    pub vertex_subsample: f64,
}

impl Default for KnnRegConfig {
    fn default() -> Self {
        Self {
            k: 8,
            metric: KnnMetric::Ce,
            shards: 1,
            target: Provenance::SmoothedSample,
            vertex_subsample: 1.0,
        }
    }
}

impl KnnRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("knn.k must be at least 1".into()));
        }
        if self.shards == 0 || !self.k.is_multiple_of(self.shards) {
            return Err(Error::Config(format!(
                "knn.shards = {} must be positive and divide knn.k = {}",
                self.shards, self.k
            )));
        }
        if !(self.vertex_subsample > 0.0 && self.vertex_subsample <= 1.0) {
            return Err(Error::Config(format!(
                "knn.vertex_subsample = {} must lie in (0, 1]",
                self.vertex_subsample
            )));
        }
        Ok(())
    }

    /// Number of vertices drawn per step out of `m`.
    pub fn sampled_vertices(&self, m: usize) -> Result<usize> {
        let count = (self.vertex_subsample * m as f64).round() as usize;
        if count == 0 {
            return Err(Error::Config(format!(
                "knn.vertex_subsample = {} selects no vertex out of {m}",
                self.vertex_subsample
            )));
        }
        Ok(count.min(m))
    }
}

/// Selected neighbours: `neighbors[j]` lists the `K` rows chosen for
/// vertex `vertices[j]`, shard 0 first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnSelection {
    pub vertices: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

/// Half-open row ranges of the `s` contiguous shards of `n` rows. Shard
/// sizes differ by at most one when `s` does not divide `n`.
pub fn shard_ranges(n: usize, s: usize) -> Vec<(usize, usize)> {
    (0..s).map(|i| (i * n / s, (i + 1) * n / s)).collect()
}

/// Sorted vertex sample, drawn without replacement. Consumes no randomness
/// when every vertex is kept.
pub fn sample_vertices<R: Rng + ?Sized>(m: usize, cfg: &KnnRegConfig, rng: &mut R) -> Result<Vec<usize>> {
    let count = cfg.sampled_vertices(m)?;
    if count == m {
        return Ok((0..m).collect());
    }
    let mut v = index::sample(rng, m, count).into_vec();
    v.sort_unstable();
    Ok(v)
}

/// Nearest rows of `rows` to each of `vertices` under `cfg.metric`.
pub fn select_neighbors(rows: &Tensor, vertices: &[usize], cfg: &KnnRegConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let per_shard = cfg.k / cfg.shards;
    let ranges = shard_ranges(rows.rows(), cfg.shards);
    if let Some((shard, &(a, b))) = ranges.iter().enumerate().find(|(_, (a, b))| b - a < per_shard) {
        return Err(Error::ShardTooSmall {
            shard,
            rows: b - a,
            needed: per_shard,
        });
    }
    let m = rows.cols();
    let mut out = Vec::with_capacity(vertices.len());
    for &v in vertices {
        if v >= m {
            return Err(Error::IndexOutOfRange { index: v, len: m });
        }
        let mut picked = Vec::with_capacity(cfg.k);
        for &(a, b) in &ranges {
            let mut scored: Vec<(f64, usize)> =
                (a..b).map(|i| (cfg.metric.deviation(rows.row(i), v), i)).collect();
            scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            picked.extend(scored[..per_shard].iter().map(|&(_, i)| i));
        }
        out.push(picked);
    }
    Ok(out)
}

/// Vertex sampling followed by neighbour selection on a validated batch.
pub fn knn_select<R: Rng + ?Sized>(batch: &SimplexBatch, cfg: &KnnRegConfig, rng: &mut R) -> Result<KnnSelection> {
    cfg.validate()?;
    let vertices = sample_vertices(batch.width(), cfg, rng)?;
    let neighbors = select_neighbors(batch.tensor(), &vertices, cfg)?;
    Ok(KnnSelection { vertices, neighbors })
}

/// `(M'K)⁻¹ Σ_m Σ_k 𝒟(e_m, p^(m,k))` over the rows of the `N×M` var `p`.
pub fn knn_loss<'t, R: Rng + ?Sized>(p: Var<'t>, cfg: &KnnRegConfig, rng: &mut R) -> Result<Var<'t>> {
    cfg.validate()?;
    let tape = p.tape();
    let values = p.value();
    SimplexBatch::new((*values).clone(), cfg.target)?;
    let m = values.cols();
    let vertices = tape.try_freeze_indices(|| sample_vertices(m, cfg, rng))?;
    let flat = tape.try_freeze_indices(|| {
        select_neighbors(&values, &vertices, cfg).map(|n| n.into_iter().flatten().collect())
    })?;
    let targets: Vec<usize> = vertices.iter().flat_map(|&v| std::iter::repeat_n(v, cfg.k)).collect();
    let count = flat.len() as f64;
    let loss = match cfg.metric {
        KnnMetric::L2 => {
            let e = tape.constant(onehot_rows(&targets, m));
            (p.gather_rows(&flat) - e).square().sum()
        }
        KnnMetric::Ce => {
            let pairs: Vec<(usize, usize)> = flat.iter().copied().zip(targets).collect();
            -p.gather_elements(&pairs).log_clamped().sum()
        }
    };
    Ok(loss.scale(1.0 / count))
}

/// [`knn_loss`] on plain values.
pub fn knn_loss_value<R: Rng + ?Sized>(batch: &SimplexBatch, cfg: &KnnRegConfig, rng: &mut R) -> Result<f64> {
    let tape = Tape::new();
    Ok(knn_loss(tape.constant(batch.tensor().clone()), cfg, rng)?.item())
}
