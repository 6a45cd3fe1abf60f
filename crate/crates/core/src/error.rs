use std::fmt;

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{} row(s) have zero norm after centering: {}", rows.len(), preview(rows))]
    DegenerateRow { rows: Vec<usize> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} rows vs {right} rows")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { clusters: usize, points: usize },

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("centroid {0} has zero norm")]
    ZeroCentroid(usize),

    #[error("anchor {0} has zero norm")]
    ZeroAnchor(usize),

    #[error("k = {k} exceeds the {available} available candidates")]
    KTooLarge { k: usize, available: usize },

    #[error("procrustes needs at least one pair, got {0}")]
    TooFewPairs(usize),

    #[error("invalid value for --{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
}

fn preview(rows: &[usize]) -> String {
    const SHOWN: usize = 10;
    let head: Vec<String> = rows.iter().take(SHOWN).map(|r| r.to_string()).collect();
    if rows.len() > SHOWN {
        format!("[{}, ...]", head.join(", "))
    } else {
        format!("[{}]", head.join(", "))
    }
}

/// Pipeline stage, recorded when `fit` fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preprocess,
    AnchorAlignment,
    PseudoPairs,
    InitialMapping,
    Refine1,
    Refine2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Preprocess => "preprocess",
            Stage::AnchorAlignment => "anchor-alignment",
            Stage::PseudoPairs => "pseudo-pairs",
            Stage::InitialMapping => "initial-mapping",
            Stage::Refine1 => "refine-1",
            Stage::Refine2 => "refine-2",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("fit failed during {stage}: {source}")]
pub struct FitError {
    pub stage: Stage,
    #[source]
    pub source: AlignError,
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, FitError>;
}

impl<T> AtStage<T> for Result<T, AlignError> {
    fn at(self, stage: Stage) -> Result<T, FitError> {
        self.map_err(|source| FitError { stage, source })
    }
}

/// Errors from reading or writing embedding and model files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: &'static [u8] },

    #[error("unknown dtype code {0}")]
    BadDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(u64),

    #[error("csv row {row} has {found} columns, expected {expected}")]
    NonRectangularCsv { row: usize, expected: usize, found: usize },

    #[error("csv parse error at row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("checksum mismatch: file is corrupted")]
    ChecksumMismatch,

    #[error("unsupported model file version {found} (this build reads version {supported})")]
    VersionUnsupported { found: u8, supported: u8 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Invalid(#[from] AlignError),
}
