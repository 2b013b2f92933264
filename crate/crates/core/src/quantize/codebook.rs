use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grad::norm;
use crate::{Error, Result, Tape, Tensor, Var};

/// Identifier stored in the `format` field of a codebook file.
pub const CODEBOOK_FORMAT: &str = "simplexvq-codebook";
pub const CODEBOOK_VERSION: u32 = 1;

/// `M` code vectors of dimension `D`, stored as the rows of an `M×D` matrix,
/// and the log of the logit temperature shared by all codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    codes: Tensor,
    log_temperature: f64,
}

impl Codebook {
    pub fn new(codes: Tensor, log_temperature: f64) -> Result<Self> {
        if codes.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "codebook must be an M x D matrix, got shape {:?}",
                codes.shape()
            )));
        }
        let (m, d) = (codes.rows(), codes.cols());
        if m < 2 || d < 1 {
            return Err(Error::Dimension(format!("codebook needs M >= 2 and D >= 1, got {m} x {d}")));
        }
        if !codes.all_finite() || !log_temperature.is_finite() {
            return Err(Error::Degenerate("codebook holds non-finite values".into()));
        }
        if let Some(i) = codes.row_iter().position(|r| norm(r) == 0.0) {
            return Err(Error::Degenerate(format!("code vector {i} is zero")));
        }
        Ok(Self {
            codes,
            log_temperature,
        })
    }

    /// Codes drawn uniformly on the unit sphere, `log τ = 0`.
    pub fn random_sphere<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<Self> {
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m {
            data.extend(unit_vector(d, rng));
        }
        Self::new(Tensor::matrix(m, d, data), 0.0)
    }

    /// Number of codes `M`.
    pub fn size(&self) -> usize {
        self.codes.rows()
    }

    /// Code dimension `D`.
    pub fn dim(&self) -> usize {
        self.codes.cols()
    }

    pub fn codes(&self) -> &Tensor {
        &self.codes
    }

    pub fn code(&self, m: usize) -> &[f64] {
        self.codes.row(m)
    }

    pub fn log_temperature(&self) -> f64 {
        self.log_temperature
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Replaces the parameters, keeping the construction invariants.
    pub fn set_params(&mut self, codes: Tensor, log_temperature: f64) -> Result<()> {
        if codes.shape() != self.codes.shape() {
            return Err(Error::Shape {
                op: "codebook update",
                expected: self.codes.shape().to_vec(),
                actual: codes.shape().to_vec(),
            });
        }
        *self = Self::new(codes, log_temperature)?;
        Ok(())
    }

    /// Registers the codes and `log τ` as trainable leaves.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> CodebookVars<'t> {
        CodebookVars {
            codes: tape.leaf(self.codes.clone()),
            log_temperature: tape.leaf(Tensor::scalar(self.log_temperature)),
        }
    }

    /// Registers the codebook as constants.
    pub fn constants<'t>(&self, tape: &'t Tape) -> CodebookVars<'t> {
        CodebookVars {
            codes: tape.constant(self.codes.clone()),
            log_temperature: tape.constant(Tensor::scalar(self.log_temperature)),
        }
    }

    pub fn to_file(&self) -> CodebookFile {
        CodebookFile {
            format: CODEBOOK_FORMAT.to_string(),
            version: CODEBOOK_VERSION,
            m: self.size(),
            d: self.dim(),
            q: self.codes.data().to_vec(),
            log_temperature: self.log_temperature,
        }
    }

    pub fn from_file(file: CodebookFile) -> Result<Self> {
        if file.format != CODEBOOK_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != CODEBOOK_VERSION {
            return Err(Error::Format(format!("unsupported codebook version {}", file.version)));
        }
        let codes = Tensor::new(vec![file.m, file.d], file.q)?;
        Self::new(codes, file.log_temperature)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_file())?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Self::from_file(serde_json::from_reader(reader)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_json(BufReader::new(File::open(path)?))
    }
}

/// On-disk codebook container (JSON).
///
/// ```json
/// {"format": "simplexvq-codebook", "version": 1, "m": 2, "d": 2,
///  "q": [1.0, 0.0, 0.0, 1.0], "log_temperature": 0.0}
/// ```
///
/// `q` holds the `m × d` code matrix in row-major order, one code per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookFile {
    pub format: String,
    pub version: u32,
    pub m: usize,
    pub d: usize,
    pub q: Vec<f64>,
    pub log_temperature: f64,
}

/// Codebook parameters living on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CodebookVars<'t> {
    pub codes: Var<'t>,
    pub log_temperature: Var<'t>,
}

impl<'t> CodebookVars<'t> {
    pub fn size(&self) -> usize {
        self.codes.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.codes.shape()[1]
    }

    /// `1 / τ = exp(-log τ)` as a scalar var.
    pub fn inverse_temperature(&self) -> Var<'t> {
        self.log_temperature.scale(-1.0).exp()
    }
}

pub(crate) fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
