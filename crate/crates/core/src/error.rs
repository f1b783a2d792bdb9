use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },
    #[error("unknown normalization policy `{0}` (expected `compose` or `decompose-strip-off`)")]
    UnknownPolicy(String),
    #[error("unknown tokenization scheme `{0}` (expected `word` or `char`)")]
    UnknownTokenization(String),
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("vocabulary has entries that collide after normalization: {}", format_collisions(.0))]
    DuplicateWords(Vec<(String, Vec<String>)>),
    #[error("radius {requested} exceeds the index build radius {max}")]
    UnsupportedRadius { requested: usize, max: usize },
    #[error("reading vocabulary {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary {path}: {source}")]
    Text {
        path: PathBuf,
        #[source]
        source: TextError,
    },
}

fn format_collisions(collisions: &[(String, Vec<String>)]) -> String {
    collisions
        .iter()
        .map(|(normalized, originals)| format!("`{normalized}` <- {originals:?}"))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider `{provider}` does not support {capability}")]
    Capability {
        provider: String,
        capability: &'static str,
    },
    #[error("masked index {index} out of range for a context of {len} words")]
    QueryRange { index: usize, len: usize },
    #[error("mask width must be at least 1")]
    MaskWidth,
    #[error("provider has no entry for doc `{doc}` index {index}{detail}")]
    Coverage {
        doc: String,
        index: usize,
        detail: String,
    },
    #[error("token alignment mismatch at doc `{doc}` index {index}: stored {stored:?}, word {word:?}")]
    Alignment {
        doc: String,
        index: usize,
        stored: Vec<String>,
        word: Vec<String>,
    },
    #[error("replacement `{0}` is not a vocabulary word")]
    UnknownWord(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("logits file vocabulary hash {found} does not match the loaded vocabulary {expected}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ProviderError {
    pub fn capability(provider: impl Into<String>, capability: &'static str) -> Self {
        ProviderError::Capability {
            provider: provider.into(),
            capability,
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Candidate(#[from] CandidateError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("doc `{doc}` index {index}: {source}")]
    At {
        doc: String,
        index: usize,
        #[source]
        source: Box<DetectorError>,
    },
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
    #[error("score file {path}: {message}")]
    ScoreFile { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge configuration: {0}")]
    Config(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no cached reply for request key {0}")]
    CacheMiss(String),
    #[error("audit log {path}: {message}")]
    Audit { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: unsupported schema `{found}` (expected `{expected}`)")]
    Schema {
        path: String,
        line: usize,
        found: String,
        expected: &'static str,
    },
    #[error("word index does not address the stored surface in {} row(s): {}", .0.len(), format_rows(.0))]
    Alignment(Vec<RowIssue>),
    #[error("{} invalid row(s): {}", .0.len(), format_rows(.0))]
    InvalidRows(Vec<RowIssue>),
    #[error("requested {requested} words but only {available} are available")]
    Size { requested: usize, available: usize },
    #[error("injection rate {0} outside (0, 1)")]
    Rate(f64),
    #[error("word_neighbor_swap needs a neighbor index")]
    MissingIndex,
    #[error(transparent)]
    Candidate(#[from] CandidateError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: usize,
    pub doc_id: String,
    pub word_index: usize,
    pub message: String,
}

fn format_rows(rows: &[RowIssue]) -> String {
    rows.iter()
        .map(|r| format!("line {} ({}, {}): {}", r.line, r.doc_id, r.word_index, r.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ROC needs at least one positive and one negative (got {n_pos} positive, {n_neg} negative)")]
    Degenerate { n_pos: usize, n_neg: usize },
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("{} evaluation example(s) have no score: {}", .0.len(), format_pairs(.0))]
    Coverage(Vec<(String, usize)>),
}

fn format_pairs(pairs: &[(String, usize)]) -> String {
    pairs
        .iter()
        .map(|(d, i)| format!("({d}, {i})"))
        .collect::<Vec<_>>()
        .join(", ")
}
