//! Synthetic datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use simplexvq::Tensor;

use crate::{HarnessError, Result};

/// Gaussian clusters around centers on the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterData {
    /// `n × dim`, one item per row.
    pub items: Tensor,
    /// Generating cluster of each item; never shown to a model.
    pub labels: Vec<usize>,
    /// `n_clusters × dim`.
    pub centers: Tensor,
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn noisy_copy<R: Rng + ?Sized>(center: &[f64], noise: f64, rng: &mut R, out: &mut Vec<f64>) {
    if noise == 0.0 {
        out.extend_from_slice(center);
        return;
    }
    let normal = Normal::new(0.0, noise).expect("noise scale checked");
    out.extend(center.iter().map(|c| c + normal.sample(rng)));
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(HarnessError::Config(format!("noise {noise} must be finite and >= 0")));
    }
    Ok(())
}

/// Items are assigned to clusters round-robin, so cluster sizes differ by
/// at most one.
pub fn gen_clusters<R: Rng + ?Sized>(
    n_items: usize,
    dim: usize,
    n_clusters: usize,
    noise: f64,
    rng: &mut R,
) -> Result<ClusterData> {
    if n_clusters < 2 {
        return Err(HarnessError::Config("gen_clusters needs at least 2 clusters".into()));
    }
    check_noise(noise)?;
    let centers: Vec<f64> = (0..n_clusters).flat_map(|_| unit_vector(dim, rng)).collect();
    let centers = Tensor::matrix(n_clusters, dim, centers);
    let labels: Vec<usize> = (0..n_items).map(|i| i % n_clusters).collect();
    let mut data = Vec::with_capacity(n_items * dim);
    for &l in &labels {
        noisy_copy(centers.row(l), noise, rng, &mut data);
    }
    Ok(ClusterData {
        items: Tensor::matrix(n_items, dim, data),
        labels,
        centers,
    })
}

/// Frame sequences driven by a Markov chain over hidden states.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceData {
    /// `(n_seq · seq_len) × dim`, sequences stored back to back.
    pub frames: Tensor,
    pub states: Vec<usize>,
    pub n_seq: usize,
    pub seq_len: usize,
    pub centers: Tensor,
}

impl SequenceData {
    /// Frames of the listed sequences, back to back.
    pub fn batch(&self, seqs: &[usize]) -> Tensor {
        let dim = self.frames.cols();
        let mut data = Vec::with_capacity(seqs.len() * self.seq_len * dim);
        for &s in seqs {
            for t in 0..self.seq_len {
                data.extend_from_slice(self.frames.row(s * self.seq_len + t));
            }
        }
        Tensor::matrix(seqs.len() * self.seq_len, dim, data)
    }
}

/// Each step keeps the state with probability `stay_prob` and otherwise
/// moves to the successor state `(s + 1) mod n_states`. Frames are the
/// state center plus Gaussian noise.
pub fn gen_sequences<R: Rng + ?Sized>(
    n_seq: usize,
    seq_len: usize,
    dim: usize,
    n_states: usize,
    stay_prob: f64,
    noise: f64,
    rng: &mut R,
) -> Result<SequenceData> {
    if seq_len < 4 {
        return Err(HarnessError::Config("gen_sequences needs seq_len >= 4".into()));
    }
    if n_states == 0 {
        return Err(HarnessError::Config("gen_sequences needs at least one state".into()));
    }
    if !(0.0..=1.0).contains(&stay_prob) {
        return Err(HarnessError::Config(format!("stay_prob {stay_prob} outside [0, 1]")));
    }
    check_noise(noise)?;
    let centers: Vec<f64> = (0..n_states).flat_map(|_| unit_vector(dim, rng)).collect();
    let centers = Tensor::matrix(n_states, dim, centers);
    let mut states = Vec::with_capacity(n_seq * seq_len);
    let mut data = Vec::with_capacity(n_seq * seq_len * dim);
    for _ in 0..n_seq {
        let mut s = rng.random_range(0..n_states);
        for t in 0..seq_len {
            if t > 0 && rng.random::<f64>() >= stay_prob {
                s = (s + 1) % n_states;
            }
            states.push(s);
            noisy_copy(centers.row(s), noise, rng, &mut data);
        }
    }
    Ok(SequenceData {
        frames: Tensor::matrix(n_seq * seq_len, dim, data),
        states,
        n_seq,
        seq_len,
        centers,
    })
}
