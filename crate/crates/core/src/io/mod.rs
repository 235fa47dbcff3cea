//! Dataset files, model files and the synthetic data generator.

pub mod binary;
pub mod model_file;
pub mod synth;
pub mod text;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Text,
    Binary,
}

impl DataFormat {
    /// Binary when the file starts with the binary magic, text otherwise.
    pub fn detect(path: &Path) -> Result<Self> {
        let mut head = [0u8; 8];
        let mut f = File::open(path)?;
        let mut filled = 0;
        while filled < head.len() {
            let n = f.read(&mut head[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        Ok(if filled == head.len() && head == binary::MAGIC {
            DataFormat::Binary
        } else {
            DataFormat::Text
        })
    }
}

/// Loads a dataset, detecting the format when `format` is `None`.
pub fn load(path: &Path, format: Option<DataFormat>) -> Result<Dataset> {
    let format = match format {
        Some(f) => f,
        None => DataFormat::detect(path)?,
    };
    match format {
        DataFormat::Text => text::load_text(path),
        DataFormat::Binary => binary::load_binary(path),
    }
}

pub fn save(data: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Text => text::save_text(data, path),
        DataFormat::Binary => binary::save_binary(data, path),
    }
}

/// Lower-case hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
