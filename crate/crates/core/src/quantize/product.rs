//! Product quantization: `G` codebooks over contiguous sub-vectors.

use rand::Rng;

use super::{quantize, Codebook, CodebookVars, QuantizerOutput, QuantizerSettings};
use crate::{Error, Result, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct ProductCodebook {
    groups: Vec<Codebook>,
}

impl ProductCodebook {
    pub fn new(groups: Vec<Codebook>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("product codebook needs at least one group".into()));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Codebook] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [Codebook] {
        &mut self.groups
    }

    /// Total feature dimension `Σ D_g`.
    pub fn dim(&self) -> usize {
        self.groups.iter().map(Codebook::dim).sum()
    }

    /// Number of distinct hard outputs, `Π M_g`.
    pub fn combinations(&self) -> usize {
        self.groups.iter().map(Codebook::size).product()
    }

    /// Column ranges `(start, len)` of each group.
    pub fn splits(&self) -> Vec<(usize, usize)> {
        split_ranges(self.groups.iter().map(Codebook::dim))
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape) -> Vec<CodebookVars<'t>> {
        self.groups.iter().map(|g| g.on_tape(tape)).collect()
    }

    pub fn constants<'t>(&self, tape: &'t Tape) -> Vec<CodebookVars<'t>> {
        self.groups.iter().map(|g| g.constants(tape)).collect()
    }

    /// Hard codes per group at inference time, `[group][item]`.
    pub fn hard_indices(&self, z: &Tensor, settings: &QuantizerSettings) -> Result<Vec<Vec<usize>>> {
        check_dim(z.cols(), self.dim())?;
        self.splits()
            .iter()
            .zip(&self.groups)
            .map(|(&(start, len), cb)| {
                let sub = sub_columns(z, start, len);
                super::hard_indices(&sub, cb, settings)
            })
            .collect()
    }

    /// Concatenation of the selected codes of every group.
    pub fn decode(&self, indices: &[Vec<usize>]) -> Tensor {
        let n = indices.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * self.dim());
        for i in 0..n {
            for (g, cb) in self.groups.iter().enumerate() {
                data.extend_from_slice(cb.code(indices[g][i]));
            }
        }
        Tensor::matrix(n, self.dim(), data)
    }
}

#[derive(Clone, Debug)]
pub struct ProductOutput<'t> {
    pub groups: Vec<QuantizerOutput<'t>>,
    /// Group outputs concatenated in group order (`N×Σ D_g`).
    pub quantized: Var<'t>,
}

/// Quantizes each sub-vector of `z` with its own codebook under a shared mode.
pub fn product_quantize<'t, R: Rng + ?Sized>(
    z: Var<'t>,
    groups: &[CodebookVars<'t>],
    settings: &QuantizerSettings,
    rng: &mut R,
) -> Result<ProductOutput<'t>> {
    if groups.is_empty() {
        return Err(Error::Config("product quantization needs at least one group".into()));
    }
    let total: usize = groups.iter().map(CodebookVars::dim).sum();
    check_dim(z.shape()[1], total)?;
    if groups.len() == 1 {
        let out = quantize(z, &groups[0], settings, rng)?;
        let quantized = out.quantized;
        return Ok(ProductOutput {
            groups: vec![out],
            quantized,
        });
    }
    let ranges = split_ranges(groups.iter().map(CodebookVars::dim));
    let outs = ranges
        .iter()
        .zip(groups)
        .map(|(&(start, len), cb)| quantize(z.slice_cols(start, len), cb, settings, rng))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<Var<'t>> = outs.iter().map(|o| o.quantized).collect();
    Ok(ProductOutput {
        quantized: Var::concat_cols(&parts),
        groups: outs,
    })
}

fn check_dim(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::Dimension(format!(
            "feature dimension {actual} does not match the summed group dimensions {expected}"
        )));
    }
    Ok(())
}

fn split_ranges(dims: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut start = 0;
    dims.map(|d| {
        let r = (start, d);
        start += d;
        r
    })
    .collect()
}

pub(crate) fn sub_columns(z: &Tensor, start: usize, len: usize) -> Tensor {
    let mut data = Vec::with_capacity(z.rows() * len);
    for row in z.row_iter() {
        data.extend_from_slice(&row[start..start + len]);
    }
    Tensor::matrix(z.rows(), len, data)
}
