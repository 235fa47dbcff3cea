//! JSON model files. Floats are written in shortest round-trip form and
//! parsed exactly, so every weight survives a save/load cycle bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{expand, expand_row, expanded_dim, monomials, AffineScaler, ExpansionSpec, MONOMIAL_ORDER};
use crate::model::{Dataset, Hyperparams, LinearModel};
use crate::solver::{SolveTrace, SolverConfig};
use crate::train::Algorithm;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub degree: u32,
    pub order: String,
    /// Exponent vector of each model feature, in model order.
    pub monomials: Vec<Vec<u32>>,
}

impl ExpansionRecord {
    pub fn new(input_dim: usize, degree: u32) -> Self {
        ExpansionRecord {
            degree,
            order: MONOMIAL_ORDER.to_string(),
            monomials: monomials(input_dim, degree),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_sha256: Option<String>,
    pub termination: Option<String>,
    pub iterations: Option<usize>,
    pub final_objective: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub solver: Option<SolverConfig>,
    pub threads: Option<usize>,
}

impl Provenance {
    pub fn from_trace(trace: &SolveTrace) -> Self {
        Provenance {
            termination: Some(trace.termination.to_string()),
            iterations: Some(trace.iterations),
            final_objective: Some(trace.final_objective()),
            ..Provenance::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    /// Feature count of the raw input rows.
    pub input_dim: usize,
    /// Applied to raw rows before expansion.
    pub scaler: Option<AffineScaler>,
    pub expansion: Option<ExpansionRecord>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: LinearModel,
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn new(model: LinearModel, metadata: ModelMetadata) -> Result<Self> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model,
            metadata,
        };
        file.check_consistent()?;
        Ok(file)
    }

    fn check_consistent(&self) -> Result<()> {
        let meta = &self.metadata;
        if let Some(s) = &meta.scaler {
            if s.offset.len() != meta.input_dim || s.scale.len() != meta.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: meta.input_dim,
                    found: s.offset.len(),
                });
            }
        }
        let feature_dim = match &meta.expansion {
            Some(e) => {
                if e.order != MONOMIAL_ORDER {
                    return Err(Error::config(format!("unsupported monomial order `{}`", e.order)));
                }
                if e.monomials != monomials(meta.input_dim, e.degree) {
                    return Err(Error::config("stored monomial list does not match its degree"));
                }
                expanded_dim(meta.input_dim, e.degree).unwrap_or(usize::MAX)
            }
            None => meta.input_dim,
        };
        self.model.check_dim(feature_dim)
    }

    /// Applies the stored scaler and expansion to raw input rows.
    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        let meta = &self.metadata;
        if data.dim() != meta.input_dim {
            return Err(Error::DimensionMismatch {
                expected: meta.input_dim,
                found: data.dim(),
            });
        }
        let scaled = match &meta.scaler {
            Some(s) => s.transform(data)?,
            None => data.clone(),
        };
        match &meta.expansion {
            Some(e) => expand(&scaled, &ExpansionSpec::new(e.degree)),
            None => Ok(scaled),
        }
    }

    /// Score of one raw input row after the stored scaler and expansion.
    pub fn score_row(&self, x: &[f64]) -> Result<f64> {
        let meta = &self.metadata;
        if x.len() != meta.input_dim {
            return Err(Error::DimensionMismatch {
                expected: meta.input_dim,
                found: x.len(),
            });
        }
        let mut scaled = Vec::new();
        let row = match &meta.scaler {
            Some(s) => {
                s.transform_row(x, &mut scaled);
                &scaled[..]
            }
            None => x,
        };
        match &meta.expansion {
            Some(e) => {
                let mut out = Vec::with_capacity(e.monomials.len());
                expand_row(row, &e.monomials, &mut out);
                self.model.checked_score(&out)
            }
            None => self.model.checked_score(row),
        }
    }

    pub fn to_writer<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::config("model file lacks format_version"))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let file = ModelFile {
            model: LinearModel::new(file.model.w, file.model.b)?,
            ..file
        };
        file.check_consistent()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_writer(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }
}
