//! Codebook usage, smoothing tightness and simplex scatter export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::simplex::{normalized_perplexity, Provenance, SimplexBatch};
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub used_count: usize,
    pub total: usize,
    pub fraction: f64,
    pub histogram: Vec<usize>,
}

pub fn codebook_usage(indices: &[usize], m: usize) -> Result<UsageReport> {
    let mut histogram = vec![0usize; m];
    for &i in indices {
        *histogram
            .get_mut(i)
            .ok_or(Error::IndexOutOfRange { index: i, len: m })? += 1;
    }
    let used_count = histogram.iter().filter(|&&c| c > 0).count();
    Ok(UsageReport {
        used_count,
        total: m,
        fraction: if m == 0 { 0.0 } else { used_count as f64 / m as f64 },
        histogram,
    })
}

/// Mean over rows of `max_m p_m`, in `[1/M, 1]`.
pub fn onehotness(batch: &SimplexBatch) -> f64 {
    let sum: f64 = batch
        .rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    sum / batch.len() as f64
}

/// Normalized perplexity of the batch mean.
pub fn mean_perplexity(batch: &SimplexBatch) -> f64 {
    normalized_perplexity(&batch.mean())
}

pub const SCATTER_HEADER: &str = "p1,p2,p3,x,y,label";

/// Equilateral-triangle embedding with vertices `(0,0)`, `(1,0)`,
/// `(0.5, √3/2)`.
pub fn barycentric_xy(p: &[f64]) -> (f64, f64) {
    (p[1] + 0.5 * p[2], p[2] * 3f64.sqrt() / 2.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterRecord {
    pub p: [f64; 3],
    pub x: f64,
    pub y: f64,
    pub label: String,
}

/// Writes one CSV row per sample. `labels` has one entry per row, or a
/// single entry shared by all rows.
pub fn export_scatter(batch: &SimplexBatch, labels: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scatter(batch, labels, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_scatter<W: Write>(batch: &SimplexBatch, labels: &[&str], mut w: W) -> Result<()> {
    if batch.width() != 3 {
        return Err(Error::Dimension(format!(
            "scatter export supports 3 codes only, batch has {}",
            batch.width()
        )));
    }
    if labels.len() != 1 && labels.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            batch.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| l.contains([',', '\n', '\r'])) {
        return Err(Error::Format(format!("label {bad:?} contains a separator")));
    }
    writeln!(w, "{SCATTER_HEADER}")?;
    for (i, row) in batch.rows().enumerate() {
        let (x, y) = barycentric_xy(row);
        let label = labels[if labels.len() == 1 { 0 } else { i }];
        writeln!(w, "{:.8e},{:.8e},{:.8e},{x:.8e},{y:.8e},{label}", row[0], row[1], row[2])?;
    }
    Ok(())
}

pub fn read_scatter(path: impl AsRef<Path>) -> Result<Vec<ScatterRecord>> {
    parse_scatter(BufReader::new(File::open(path)?))
}

pub fn parse_scatter<R: BufRead>(reader: R) -> Result<Vec<ScatterRecord>> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == SCATTER_HEADER => {}
        Some(Ok(h)) => return Err(Error::Format(format!("unexpected scatter header {h:?}"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Format("empty scatter file".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!("line {}: expected 6 fields", n + 2)));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))
        };
        out.push(ScatterRecord {
            p: [num(fields[0])?, num(fields[1])?, num(fields[2])?],
            x: num(fields[3])?,
            y: num(fields[4])?,
            label: fields[5].to_string(),
        });
    }
    Ok(out)
}

/// `p` rows of parsed records as a batch.
pub fn records_to_batch(records: &[ScatterRecord], provenance: Provenance) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.p.to_vec()).collect();
    Ok(SimplexBatch::from_rows(&rows, provenance)?.tensor().clone())
}
