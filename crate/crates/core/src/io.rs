//! On-disk formats.
//!
//! Embedding files (`EMB1`), little-endian throughout:
//!
//! ```text
//! magic     4 bytes  "EMB1"
//! dtype     u8       0 = f32, 1 = f64
//! n         u64
//! d         u32
//! label_len u16, followed by label_len bytes of UTF-8
//! payload   n * d values, row-major
//! ```
//!
//! Files ending in `.csv` are read and written as header-less rows of
//! comma-separated decimals instead.
//!
//! Model files (`EALM`), little-endian throughout:
//!
//! ```text
//! magic    4 bytes "EALM"
//! version  u8
//! d        u32
//! W        d * d f64, row-major
//! stats A  d f64 mean, then f64 mean-norm share
//! stats B  same layout
//! stages   3 x (u8 present flag, f64 value): initial, refine-1, refine-2
//! trace    u32 count, then that many f64
//! config   u32 byte length, then the JSON-encoded pipeline config
//! sha256   32 bytes over everything above
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::embedding::EmbeddingMatrix;
use crate::error::FormatError;
use crate::model::{AlignmentModel, StageDiagnostics};
use crate::preprocess::NormalizationStats;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const MODEL_MAGIC: &[u8; 4] = b"EALM";
pub const MODEL_VERSION: u8 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(FormatError::BadDtype(other)),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads an `EMB1` file, or CSV when the path ends in `.csv`. 32-bit payloads
/// are widened to 64-bit.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if is_csv(path) {
        parse_csv(&bytes, stem(path))
    } else {
        decode_embeddings(&bytes)
    }
}

/// Writes 64-bit `EMB1`, or CSV when the path ends in `.csv`.
pub fn write_embeddings(path: impl AsRef<Path>, x: &EmbeddingMatrix) -> Result<(), FormatError> {
    let path = path.as_ref();
    if is_csv(path) {
        fs::write(path, format_csv(x))?;
    } else {
        fs::write(path, encode_embeddings(x, Dtype::F64))?;
    }
    Ok(())
}

pub fn write_embeddings_as(path: impl AsRef<Path>, x: &EmbeddingMatrix, dtype: Dtype) -> Result<(), FormatError> {
    fs::write(path, encode_embeddings(x, dtype))?;
    Ok(())
}

pub fn encode_embeddings(x: &EmbeddingMatrix, dtype: Dtype) -> Vec<u8> {
    let label = truncate_label(x.label());
    let mut out = Vec::with_capacity(19 + label.len() + x.n() * x.d() * dtype.size());
    out.extend_from_slice(EMB_MAGIC);
    out.push(dtype.code());
    out.extend_from_slice(&(x.n() as u64).to_le_bytes());
    out.extend_from_slice(&(x.d() as u32).to_le_bytes());
    out.extend_from_slice(&(label.len() as u16).to_le_bytes());
    out.extend_from_slice(label);
    for &v in x.data().iter() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

fn truncate_label(label: &str) -> &[u8] {
    let mut end = label.len().min(u16::MAX as usize);
    while !label.is_char_boundary(end) {
        end -= 1;
    }
    &label.as_bytes()[..end]
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != EMB_MAGIC {
        return Err(FormatError::BadMagic { found: bytes.iter().take(4).copied().collect(), expected: EMB_MAGIC });
    }
    let mut cur = Cursor::new(bytes, 4);
    let dtype = Dtype::from_code(cur.u8()?)?;
    let n = cur.u64()?;
    let d = cur.u32()? as u64;
    let label_len = cur.u16()? as usize;
    let label = String::from_utf8(cur.take(label_len)?.to_vec())
        .map_err(|_| FormatError::Malformed("label is not valid UTF-8".into()))?;

    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(dtype.size() as u64))
        .ok_or_else(|| FormatError::Malformed(format!("payload size {n} x {d} overflows")))?;
    let found = cur.remaining() as u64;
    if found < expected {
        return Err(FormatError::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(FormatError::TrailingBytes(found - expected));
    }
    let (n, d) = (n as usize, d as usize);
    let payload = cur.take(expected as usize)?;
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFiniteValue { row: pos / d.max(1), col: pos % d.max(1) });
    }
    let data = Array2::from_shape_vec((n, d), values).map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(EmbeddingMatrix::new(data, label)?)
}

pub fn parse_csv(bytes: &[u8], label: impl Into<String>) -> Result<EmbeddingMatrix, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FormatError::CsvParse { row, message: e.to_string() })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(FormatError::NonRectangularCsv { row, expected, found: record.len() });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| FormatError::CsvParse { row, message: format!("{field:?} is not a number") })?;
            if !v.is_finite() {
                return Err(FormatError::NonFiniteValue { row, col });
            }
            values.push(v);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    let data = Array2::from_shape_vec((rows, d), values).map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(EmbeddingMatrix::new(data, label)?)
}

/// Shortest round-tripping decimal for every value.
pub fn format_csv(x: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    for row in x.view().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn save_model(path: impl AsRef<Path>, model: &AlignmentModel) -> Result<(), FormatError> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AlignmentModel, FormatError> {
    decode_model(&fs::read(path)?)
}

pub fn encode_model(model: &AlignmentModel) -> Result<Vec<u8>, FormatError> {
    let d = model.d();
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    put_f64s(&mut out, model.w.iter().copied());
    for stats in [&model.stats_a, &model.stats_b] {
        put_f64s(&mut out, stats.mean.iter().copied());
        out.extend_from_slice(&stats.mean_norm_share.to_le_bytes());
    }
    let diag = &model.diagnostics;
    for stage in [diag.initial, diag.refine1, diag.refine2] {
        out.push(stage.is_some() as u8);
        out.extend_from_slice(&stage.unwrap_or(0.0).to_le_bytes());
    }
    out.extend_from_slice(&(diag.refine1_trace.len() as u32).to_le_bytes());
    put_f64s(&mut out, diag.refine1_trace.iter().copied());
    let config = serde_json::to_vec(&model.config).map_err(|e| FormatError::Malformed(e.to_string()))?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(digest.as_slice());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<AlignmentModel, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(FormatError::BadMagic { found: bytes.iter().take(4).copied().collect(), expected: MODEL_MAGIC });
    }
    let version = *bytes.get(4).ok_or(FormatError::TruncatedPayload { expected: 5, found: bytes.len() as u64 })?;
    if version != MODEL_VERSION {
        return Err(FormatError::VersionUnsupported { found: version, supported: MODEL_VERSION });
    }
    if bytes.len() < 5 + CHECKSUM_LEN {
        return Err(FormatError::TruncatedPayload { expected: (5 + CHECKSUM_LEN) as u64, found: bytes.len() as u64 });
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(FormatError::ChecksumMismatch);
    }

    let mut cur = Cursor::new(body, 5);
    let d = cur.u32()? as usize;
    let w = Array2::from_shape_vec((d, d), cur.f64s(d * d)?).map_err(|e| FormatError::Malformed(e.to_string()))?;
    let mut stats = Vec::with_capacity(2);
    for _ in 0..2 {
        let mean = Array1::from(cur.f64s(d)?);
        let mean_norm_share = cur.f64()?;
        stats.push(NormalizationStats { mean, mean_norm_share });
    }
    let mut stages = [None; 3];
    for slot in &mut stages {
        let present = cur.u8()?;
        let value = cur.f64()?;
        *slot = (present != 0).then_some(value);
    }
    let trace_len = cur.u32()? as usize;
    let refine1_trace = cur.f64s(trace_len)?;
    let config_len = cur.u32()? as usize;
    let config: PipelineConfig =
        serde_json::from_slice(cur.take(config_len)?).map_err(|e| FormatError::Malformed(format!("config: {e}")))?;
    if cur.remaining() != 0 {
        return Err(FormatError::TrailingBytes(cur.remaining() as u64));
    }
    let stats_b = stats.pop().expect("two stats blocks");
    let stats_a = stats.pop().expect("two stats blocks");
    let diagnostics = StageDiagnostics { initial: stages[0], refine1: stages[1], refine2: stages[2], refine1_trace };
    Ok(AlignmentModel::new(w, stats_a, stats_b, diagnostics, config)?)
}

fn put_f64s(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Bounds-checked little-endian reader.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < len {
            return Err(FormatError::TruncatedPayload {
                expected: (self.pos + len) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| FormatError::Malformed("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
