//! Copying-error detection for transmitted texts: text normalization,
//! Levenshtein candidate sets, probability providers, the CCR, PLLR,
//! discriminator and LLM-judge detectors, labeled datasets and ROC
//! evaluation.

pub mod candidates;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod judge;
pub mod providers;
pub mod text;

pub use candidates::{build_index, CandidateSet, NeighborIndex, Vocabulary};
pub use detectors::{rank_corpus, DetectorConfig, DetectorKind, ErrorScore};
pub use eval::{evaluate, roc, tpr_at_fpr, EvalReport, RocCurve};
pub use text::{normalize, segment_words, Document, NormalizationPolicy, Tokenization, WordSpan};
