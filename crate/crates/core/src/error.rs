use chrono::NaiveDate;
use thiserror::Error;

use crate::div::DivisionTree;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {source}")]
    AtLine { line: u64, source: Box<Error> },

    #[error("malformed row: {0}")]
    Malformed(String),

    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("invalid quote: {0}")]
    InvalidQuote(String),

    #[error("duplicate {what} `{key}`")]
    Duplicate { what: &'static str, key: String },

    #[error("unknown market `{0}`")]
    UnknownMarket(String),

    #[error("shares outstanding must be positive for `{0}`")]
    NonPositiveShares(String),

    #[error("quantity must be positive for `{0}`")]
    NonPositiveQuantity(String),

    #[error("sector `{child}` has conflicting parents `{first}` and `{second}`")]
    Parentage {
        child: String,
        first: String,
        second: String,
    },

    #[error("empty portfolio")]
    EmptyPortfolio,

    #[error("unknown ticker `{0}`")]
    UnknownTicker(String),

    #[error("unknown sector `{0}`")]
    UnknownSector(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("checksum mismatch for {path}: manifest has {expected}, file has {actual}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("window must be at least 1 trading day")]
    InvalidWindow,

    #[error("insufficient history: {needed} trading days needed, {available} available")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("no quote at or before {0}")]
    NoQuoteBefore(NaiveDate),

    #[error("{indicator} for `{ticker}`: {source}")]
    Indicator {
        ticker: String,
        indicator: &'static str,
        source: Box<Error>,
    },

    #[error("no groups to aggregate")]
    EmptyGroups,

    #[error("row `{row}` lacks variable `{variable}`")]
    MissingVariable { row: String, variable: String },

    #[error("variable `{variable}`: expected {expected}, found {found}")]
    KindMismatch {
        variable: String,
        expected: String,
        found: String,
    },

    #[error("variable `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid symbolic value: {0}")]
    InvalidValue(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("at least {needed} objects required, found {found}")]
    TooFewObjects { needed: usize, found: usize },

    #[error("K must lie in 1..={n}, got {k}")]
    InvalidK { k: usize, n: usize },

    #[error("division stopped at {achieved} clusters, {requested} requested: no splittable cluster left")]
    EarlyStop {
        requested: usize,
        achieved: usize,
        tree: Box<DivisionTree>,
    },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("Jacobi iteration did not converge, off-diagonal residual {residual:e}")]
    NoConvergence { residual: f64 },

    #[error("axis {axis} out of range 1..={available}")]
    InvalidAxis { axis: usize, available: usize },

    #[error("invalid dissimilarity matrix: {0}")]
    InvalidDissimilarity(String),

    #[error("nothing to render")]
    EmptyPlot,

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("level `{level}` cannot be described at granularity `{granularity}`")]
    InvalidCell { level: String, granularity: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("scope `{0}` selects no stock")]
    EmptyScope(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_line(self, line: u64) -> Self {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
