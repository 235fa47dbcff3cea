//! Fixed-width little-endian dataset format built for one-pass streaming.
//!
//! Header (24 bytes): magic `GCMDATA\0`, format version (u32), feature count
//! `d` (u32), row count (u64). Each record is a u64 group id, an i8 label,
//! a u8 key flag and `d` f64 features. Rows are sorted by group id, so a
//! reader only ever holds the current group in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Aggregation, Dataset, GroupBlock, Hyperparams, Label, LinearModel};
use crate::objective::{GradientVector, LossAccumulator, ObjectiveValue};

pub const MAGIC: [u8; 8] = *b"GCMDATA\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

pub fn record_len(d: usize) -> usize {
    8 + 1 + 1 + 8 * d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryHeader {
    pub d: usize,
    pub rows: u64,
}

/// Streams a binary dataset one group at a time. Memory use is bounded by the
/// largest group.
pub struct BinaryGroupReader<R> {
    inner: R,
    source: PathBuf,
    header: BinaryHeader,
    records_read: u64,
    rows_emitted: usize,
    record: Vec<u8>,
    staging: Vec<f64>,
    pending: Option<(u64, i8, u8)>,
    last_group: Option<u64>,
    features: Vec<f64>,
}

impl BinaryGroupReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::with_source(BufReader::with_capacity(1 << 20, File::open(path)?), path.to_path_buf())
    }
}

impl<R: Read> BinaryGroupReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        Self::with_source(inner, PathBuf::from("<stream>"))
    }

    fn with_source(mut inner: R, source: PathBuf) -> Result<Self> {
        let format_err = |reason: String| Error::Format {
            path: source.clone(),
            reason,
        };
        let mut head = [0u8; HEADER_LEN];
        inner.read_exact(&mut head).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => format_err("file shorter than the binary header".into()),
            _ => Error::Io(e),
        })?;
        if head[..8] != MAGIC {
            return Err(format_err("not a binary dataset (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let d = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        if d == 0 {
            return Err(format_err("feature count is zero".into()));
        }
        let rows = u64::from_le_bytes(head[16..24].try_into().unwrap());
        Ok(BinaryGroupReader {
            inner,
            source,
            header: BinaryHeader { d, rows },
            records_read: 0,
            rows_emitted: 0,
            record: vec![0; record_len(d)],
            staging: vec![0.0; d],
            pending: None,
            last_group: None,
            features: Vec::new(),
        })
    }

    pub fn header(&self) -> BinaryHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<Option<(u64, i8, u8)>> {
        if self.records_read == self.header.rows {
            let mut probe = [0u8; 1];
            return match self.inner.read(&mut probe)? {
                0 => Ok(None),
                _ => Err(Error::Format {
                    path: self.source.clone(),
                    reason: format!("data continues past the {} declared rows", self.header.rows),
                }),
            };
        }
        let index = self.records_read;
        self.inner.read_exact(&mut self.record).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::MalformedRecord {
                record: index,
                message: format!("file ends early; header declares {} rows", self.header.rows),
            },
            _ => Error::Io(e),
        })?;
        let group_id = u64::from_le_bytes(self.record[0..8].try_into().unwrap());
        let label = self.record[8] as i8;
        let key = self.record[9];
        for (slot, bytes) in self.staging.iter_mut().zip(self.record[10..].chunks_exact(8)) {
            *slot = f64::from_le_bytes(bytes.try_into().unwrap());
        }
        if self.staging.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedRecord {
                record: index,
                message: "non-finite feature value".into(),
            });
        }
        if key > 1 {
            return Err(Error::MalformedRecord {
                record: index,
                message: format!("key flag must be 0 or 1, found {key}"),
            });
        }
        if Label::from_i8(label).is_none() {
            return Err(Error::MalformedRecord {
                record: index,
                message: format!("label must be +1 or -1, found {label}"),
            });
        }
        self.records_read += 1;
        Ok(Some((group_id, label, key)))
    }

    /// The next group, or `None` at end of data. Structural problems are
    /// reported as they are met.
    pub fn next_group(&mut self) -> Result<Option<GroupBlock<'_>>> {
        self.features.clear();
        let first = match self.pending.take() {
            Some(r) => r,
            None => match self.read_record()? {
                Some(r) => r,
                None => return Ok(None),
            },
        };
        let (group_id, label_byte, key_byte) = first;
        let first_record = self.records_read - 1;
        if let Some(prev) = self.last_group {
            if group_id <= prev {
                return Err(Error::UnsortedGroups {
                    group_id,
                    record: first_record,
                });
            }
        }
        self.last_group = Some(group_id);
        let label = Label::from_i8(label_byte).expect("validated on read");
        self.features.extend_from_slice(&self.staging);
        let mut keys = Vec::new();
        if key_byte == 1 {
            keys.push(0);
        }
        let mut len = 1;
        while let Some(r) = self.read_record()? {
            if r.0 != group_id {
                self.pending = Some(r);
                break;
            }
            if r.1 != label_byte {
                return Err(Error::MixedLabelGroup { group_id });
            }
            if r.2 == 1 {
                keys.push(len);
            }
            self.features.extend_from_slice(&self.staging);
            len += 1;
        }
        let key = match label {
            Label::Negative if !keys.is_empty() => return Err(Error::KeyOnNegative { group_id }),
            Label::Negative => None,
            Label::Positive => match keys.len() {
                0 => return Err(Error::MissingKey { group_id }),
                1 => Some(keys[0]),
                count => return Err(Error::MultipleKeys { group_id, count }),
            },
        };
        let first_row = self.rows_emitted;
        self.rows_emitted += len;
        Ok(Some(GroupBlock {
            group_id,
            label,
            key,
            first_row,
            features: &self.features,
            d: self.header.d,
        }))
    }

    /// Calls `f` on every group in file order.
    pub fn for_each_group<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(&GroupBlock<'_>) -> Result<()>,
    {
        while let Some(block) = self.next_group()? {
            f(&block)?;
        }
        Ok(())
    }
}

/// Writes the binary format row by row. The row count is fixed up front.
pub struct BinaryWriter<W: Write> {
    inner: W,
    d: usize,
    declared: u64,
    written: u64,
    last_group: Option<u64>,
    record: Vec<u8>,
}

impl<W: Write> BinaryWriter<W> {
    pub fn new(mut inner: W, d: usize, rows: u64) -> Result<Self> {
        let d32 = u32::try_from(d).map_err(|_| Error::config("feature count does not fit the binary header"))?;
        if d == 0 {
            return Err(Error::config("feature dimension must be at least 1"));
        }
        inner.write_all(&MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        inner.write_all(&d32.to_le_bytes())?;
        inner.write_all(&rows.to_le_bytes())?;
        Ok(BinaryWriter {
            inner,
            d,
            declared: rows,
            written: 0,
            last_group: None,
            record: Vec::with_capacity(record_len(d)),
        })
    }

    pub fn write_row(&mut self, group_id: u64, label: Label, is_key: bool, features: &[f64]) -> Result<()> {
        if features.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: features.len(),
            });
        }
        if self.written == self.declared {
            return Err(Error::config(format!("more rows than the {} declared", self.declared)));
        }
        if self.last_group.is_some_and(|prev| group_id < prev) {
            return Err(Error::UnsortedGroups {
                group_id,
                record: self.written,
            });
        }
        self.last_group = Some(group_id);
        self.record.clear();
        self.record.extend_from_slice(&group_id.to_le_bytes());
        self.record.push(label.as_i8() as u8);
        self.record.push(u8::from(is_key));
        for v in features {
            self.record.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&self.record)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.declared {
            return Err(Error::config(format!(
                "wrote {} rows but the header declares {}",
                self.written, self.declared
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_binary<W: Write>(data: &Dataset, out: W) -> Result<W> {
    let mut w = BinaryWriter::new(out, data.dim(), data.n_rows() as u64)?;
    for i in 0..data.n_rows() {
        w.write_row(data.group_id(i), data.label(i), data.is_key(i), data.row(i))?;
    }
    w.finish()
}

pub fn save_binary(data: &Dataset, path: &Path) -> Result<()> {
    write_binary(data, BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Reads a whole binary stream into memory.
pub fn read_binary<R: Read>(reader: BinaryGroupReader<R>) -> Result<Dataset> {
    let mut reader = reader;
    let d = reader.header().d;
    let cap = usize::try_from(reader.header().rows).unwrap_or(0).min(1 << 24);
    let mut features = Vec::with_capacity(cap * d);
    let mut group_ids = Vec::with_capacity(cap);
    let mut labels = Vec::with_capacity(cap);
    let mut is_key = Vec::with_capacity(cap);
    reader.for_each_group(|block| {
        features.extend_from_slice(block.features);
        for i in 0..block.len() {
            group_ids.push(block.group_id);
            labels.push(block.label);
            is_key.push(block.key == Some(i));
        }
        Ok(())
    })?;
    Dataset::from_sorted_parts(d, features, group_ids, labels, is_key)
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    read_binary(BinaryGroupReader::open(path)?)
}

/// Objective value (and gradient) accumulated over a stream, one group in
/// memory at a time. Same summation order as the single-threaded in-memory
/// evaluation, so results agree bit for bit.
pub fn stream_objective<R: Read>(
    reader: &mut BinaryGroupReader<R>,
    model: &LinearModel,
    hp: &Hyperparams,
    aggregation: Aggregation,
    with_gradient: bool,
) -> Result<(ObjectiveValue, Option<GradientVector>)> {
    model.check_dim(reader.header().d)?;
    let mut acc = LossAccumulator::new(model, hp, aggregation, with_gradient)?;
    reader.for_each_group(|block| {
        acc.push_block(block);
        Ok(())
    })?;
    acc.finish()
}
