//! CSV dataset format: header `group_id,label,is_key,f1,…,fd`, one candidate
//! per line, label `+1`/`-1`, is_key `0`/`1`. Rows may come in any order and
//! are grouped on load.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Candidate, Dataset, Label};

const FIXED_COLUMNS: [&str; 3] = ["group_id", "label", "is_key"];

fn malformed(line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        line,
        message: message.into(),
    }
}

pub fn read_text<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 4 || header.iter().take(3).ne(FIXED_COLUMNS) {
        return Err(malformed(1, "header must start with group_id,label,is_key and name at least one feature"));
    }
    let d = header.len() - 3;
    let mut candidates = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(malformed(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let group_id: u64 = record[0]
            .parse()
            .map_err(|_| malformed(line, format!("bad group_id `{}`", &record[0])))?;
        let label = record[1]
            .parse::<i8>()
            .ok()
            .and_then(Label::from_i8)
            .ok_or_else(|| malformed(line, format!("label must be +1 or -1, found `{}`", &record[1])))?;
        let is_key = match &record[2] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(line, format!("is_key must be 0 or 1, found `{other}`"))),
        };
        let mut features = Vec::with_capacity(d);
        for (j, field) in record.iter().skip(3).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| malformed(line, format!("feature f{} is not a number: `{field}`", j + 1)))?;
            if !v.is_finite() {
                return Err(malformed(line, format!("feature f{} is not finite", j + 1)));
            }
            features.push(v);
        }
        candidates.push(Candidate {
            group_id,
            label,
            is_key,
            features,
        });
    }
    Dataset::new(d, candidates)
}

pub fn load_text(path: &Path) -> Result<Dataset> {
    read_text(File::open(path)?)
}

pub fn write_text<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    write!(out, "group_id,label,is_key")?;
    for j in 1..=data.dim() {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for i in 0..data.n_rows() {
        write!(out, "{},{},{}", data.group_id(i), data.label(i).as_i8(), u8::from(data.is_key(i)))?;
        for v in data.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_text(data: &Dataset, path: &Path) -> Result<()> {
    write_text(data, BufWriter::new(File::create(path)?))
}
