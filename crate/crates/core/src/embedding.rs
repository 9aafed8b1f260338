//! Embedding matrices and their on-disk formats.
//!
//! Two interchange formats are supported:
//!
//! * **binary**: `b"TACLEMB1"`, `u64` LE `n`, `u64` LE `d`, then `n * d`
//!   `f32` LE values in row-major order, then `n` ids, each a `u32` LE byte
//!   length followed by UTF-8 bytes. Nothing may follow the last id.
//! * **jsonl**: one `{"id": .., "vec": [..], "label": ..}` object per line;
//!   `label` is optional. Blank lines are ignored.
//!
//! Both loaders validate every matrix invariant and reject the input with a
//! typed error naming the offending row rather than truncating.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BINARY_MAGIC: &[u8; 8] = b"TACLEMB1";
/// Magic plus the two `u64` dimensions.
pub const BINARY_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("DimensionMismatch: row {row} (id {id:?}) has length {found}, expected {expected}")]
    DimensionMismatch { row: usize, id: String, expected: usize, found: usize },
    #[error("DuplicateId: id {id:?} at row {row} already used at row {first_row}")]
    DuplicateId { id: String, row: usize, first_row: usize },
    #[error("NonFiniteValue: row {row} (id {id:?}) column {col} is not finite")]
    NonFiniteValue { row: usize, id: String, col: usize },
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("MalformedRecord: line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("InvalidId: row {row}: {reason}")]
    InvalidId { row: usize, reason: String },
    #[error("Truncated: {0}")]
    Truncated(String),
    #[error("TrailingData: {0} unread bytes after the last id")]
    TrailingData(usize),
    #[error("EmptyMatrix: at least one sample with at least one dimension is required")]
    EmptyMatrix,
    #[error("IoFailure: {0}")]
    IoFailure(#[from] io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Binary,
    Jsonl,
}

impl FromStr for EmbeddingFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "binary" | "bin" => Ok(Self::Binary),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown embedding format {other:?} (expected binary|jsonl)")),
        }
    }
}

impl fmt::Display for EmbeddingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Binary => "binary",
            Self::Jsonl => "jsonl",
        })
    }
}

/// One line of the JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    #[serde(deserialize_with = "f32s_via_f64")]
    pub vec: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Reads through f64 so values beyond the f32 range become infinities and
/// fail the finiteness check, instead of surfacing as a parse error. Exact
/// for any f32 printed in shortest form.
fn f32s_via_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f32>, D::Error> {
    let wide: Vec<f64> = Deserialize::deserialize(d)?;
    Ok(wide.into_iter().map(|v| v as f32).collect())
}

/// `n x d` row-major sample embeddings with unique, non-empty sample ids.
///
/// Labels are opaque metadata carried through the JSONL format only; the
/// binary format does not store them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    labels: Vec<Option<String>>,
}

impl EmbeddingMatrix {
    /// Builds a validated matrix from row-major data.
    pub fn new(d: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        let labels = vec![None; ids.len()];
        Self::with_labels(d, data, ids, labels)
    }

    pub fn with_labels(d: usize, data: Vec<f32>, ids: Vec<String>, labels: Vec<Option<String>>) -> Result<Self> {
        let n = ids.len();
        if n == 0 || d == 0 {
            return Err(EmbeddingError::EmptyMatrix);
        }
        if data.len() != n * d {
            return Err(EmbeddingError::MalformedHeader(format!(
                "{} values do not fill {n} rows of dimension {d}",
                data.len()
            )));
        }
        if labels.len() != n {
            return Err(EmbeddingError::MalformedHeader(format!("{} labels for {n} samples", labels.len())));
        }
        validate_ids(&ids)?;
        for (i, row) in data.chunks_exact(d).enumerate() {
            if let Some(col) = row.iter().position(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFiniteValue { row: i, id: ids[i].clone(), col });
            }
        }
        Ok(Self { n, d, data, ids, labels })
    }

    /// Builds a matrix from records, taking `d` from the first record.
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self> {
        let d = records.first().ok_or(EmbeddingError::EmptyMatrix)?.vec.len();
        if d == 0 {
            return Err(EmbeddingError::EmptyMatrix);
        }
        let mut data = Vec::with_capacity(records.len() * d);
        let mut ids = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for (row, rec) in records.into_iter().enumerate() {
            if rec.vec.len() != d {
                return Err(EmbeddingError::DimensionMismatch { row, id: rec.id, expected: d, found: rec.vec.len() });
            }
            data.extend_from_slice(&rec.vec);
            ids.push(rec.id);
            labels.push(rec.label);
        }
        Self::with_labels(d, data, ids, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn records(&self) -> impl Iterator<Item = SampleRecord> + '_ {
        self.rows().zip(&self.ids).zip(&self.labels).map(|((vec, id), label)| SampleRecord {
            id: id.clone(),
            vec: vec.to_vec(),
            label: label.clone(),
        })
    }

    /// Returns a copy with every row scaled to unit Euclidean norm. All-zero
    /// rows are left unchanged.
    pub fn l2_normalized(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm > 0.0 {
                data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
            } else {
                data.extend_from_slice(row);
            }
        }
        Self { data, ..self.clone() }
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self::with_labels(self.d, data, self.ids.clone(), self.labels.clone())
    }

    /// Encodes the binary format. Output is a pure function of the matrix.
    pub fn to_binary_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|id| 4 + id.len()).sum();
        let mut out = Vec::with_capacity(BINARY_HEADER_LEN + self.data.len() * 4 + id_bytes);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    /// Decodes the binary format. Never allocates more than the input size
    /// implies, so hostile headers cannot trigger huge allocations.
    pub fn from_binary_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader { bytes, pos: 0 };
        let magic =
            reader.take(8).map_err(|_| EmbeddingError::MalformedHeader("shorter than the 8-byte magic".into()))?;
        if magic != BINARY_MAGIC {
            return Err(EmbeddingError::MalformedHeader(format!(
                "bad magic {:?}, expected \"TACLEMB1\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let n = reader.u64().map_err(|_| EmbeddingError::MalformedHeader("missing sample count".into()))?;
        let d = reader.u64().map_err(|_| EmbeddingError::MalformedHeader("missing dimension".into()))?;
        if n == 0 || d == 0 {
            return Err(EmbeddingError::MalformedHeader(format!("n = {n} and d = {d} must both be at least 1")));
        }
        let payload = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| usize::try_from(c).ok())
            .filter(|&c| c <= reader.remaining())
            .ok_or_else(|| {
                EmbeddingError::MalformedHeader(format!(
                    "header declares n = {n}, d = {d} but only {} payload bytes follow",
                    reader.remaining()
                ))
            })?;
        // Each id needs at least its 4-byte length prefix.
        let n = n as usize;
        let d = d as usize;
        if n > (reader.remaining() - payload) / 4 {
            return Err(EmbeddingError::Truncated(format!(
                "{n} ids declared but only {} bytes remain after the vectors",
                reader.remaining() - payload
            )));
        }
        let data: Vec<f32> =
            reader.take(payload)?.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let mut ids = Vec::with_capacity(n);
        for row in 0..n {
            let len = reader.u32().map_err(|_| EmbeddingError::Truncated(format!("id length for row {row}")))?;
            let raw =
                reader.take(len as usize).map_err(|_| EmbeddingError::Truncated(format!("id bytes for row {row}")))?;
            let id = std::str::from_utf8(raw).map_err(|e| EmbeddingError::InvalidId { row, reason: e.to_string() })?;
            ids.push(id.to_owned());
        }
        if reader.remaining() > 0 {
            return Err(EmbeddingError::TrailingData(reader.remaining()));
        }
        Self::new(d, data, ids)
    }

    /// Encodes the JSONL format, one record per line with a trailing newline.
    pub fn to_jsonl_string(&self) -> String {
        let mut out = String::new();
        for rec in self.records() {
            // Records of finite floats and strings always serialize.
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(line)
                .map_err(|e| EmbeddingError::MalformedRecord { line: idx + 1, reason: e.to_string() })?;
            records.push(rec);
        }
        Self::from_records(records)
    }
}

fn validate_ids(ids: &[String]) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(EmbeddingError::InvalidId { row, reason: "empty id".into() });
        }
        if let Some(&first_row) = seen.get(id.as_str()) {
            return Err(EmbeddingError::DuplicateId { id: id.clone(), row, first_row });
        }
        seen.insert(id, row);
    }
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if len > self.remaining() {
            return Err(EmbeddingError::Truncated(format!(
                "needed {len} bytes at offset {}, {} available",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    match format {
        EmbeddingFormat::Binary => EmbeddingMatrix::from_binary_bytes(&fs::read(path)?),
        EmbeddingFormat::Jsonl => EmbeddingMatrix::from_jsonl_str(&fs::read_to_string(path)?),
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        EmbeddingFormat::Binary => out.write_all(&matrix.to_binary_bytes())?,
        EmbeddingFormat::Jsonl => out.write_all(matrix.to_jsonl_string().as_bytes())?,
    }
    out.flush()?;
    Ok(())
}
