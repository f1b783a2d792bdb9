//! Expert-labeled error dataset, presumed negatives and synthetic errors.
//!
//! On disk a dataset is JSON lines, one [`LabeledExample`] per line, each
//! carrying `"schema": "logion-errors/v1"`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::candidates::NeighborIndex;
use crate::error::{DatasetError, RowIssue};
use crate::text::{is_punctuation, normalize, Document, NormalizationPolicy, Tokenization};

pub const SCHEMA: &str = "logion-errors/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Error,
    NonError,
    Plausible,
    Uncertain,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Error, Label::NonError, Label::Plausible, Label::Uncertain];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Error => "error",
            Label::NonError => "non_error",
            Label::Plausible => "plausible",
            Label::Uncertain => "uncertain",
        }
    }

    /// `error` and `non_error` are definitive; the others stay out of
    /// evaluation.
    pub fn is_definitive(&self) -> bool {
        matches!(self, Label::Error | Label::NonError)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Digitization,
    Print,
    Scribal,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [ErrorCategory::Digitization, ErrorCategory::Print, ErrorCategory::Scribal];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::Digitization => "digitization",
            ErrorCategory::Print => "print",
            ErrorCategory::Scribal => "scribal",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown error category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExpertLabeled,
    PresumedNegative,
}

/// One dataset row. Field order here is the canonical on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub schema: String,
    pub doc_id: String,
    pub word_index: usize,
    pub surface: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
    #[serde(default)]
    pub expert_notes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_alternative: Option<String>,
    pub context_text: String,
    /// Corpus part the word was drawn from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
}

impl LabeledExample {
    pub fn key(&self) -> (&str, usize) {
        (&self.doc_id, self.word_index)
    }

    /// Category present exactly when the label is `error`.
    pub fn check_category(&self) -> Result<(), String> {
        match (self.label, self.category) {
            (Label::Error, None) => Err("label `error` requires a category".into()),
            (Label::Error, Some(_)) | (_, None) => Ok(()),
            (l, Some(c)) => Err(format!("label `{l}` must not carry category `{c}`")),
        }
    }
}

/// How text is segmented when checking word indices.
#[derive(Debug, Clone, Copy, Default)]
pub struct SegmentationOptions {
    pub policy: NormalizationPolicy,
    pub scheme: Tokenization,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads and validates a dataset file.
pub fn load_dataset(path: &Path, seg: SegmentationOptions) -> Result<Vec<LabeledExample>, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes).map_err(|e| DatasetError::Text(crate::error::TextError::Decode {
        offset: e.utf8_error().valid_up_to(),
    }))?;
    parse_dataset(&text, &path.display().to_string(), seg)
}

pub fn parse_dataset(text: &str, origin: &str, seg: SegmentationOptions) -> Result<Vec<LabeledExample>, DatasetError> {
    let mut rows = Vec::new();
    let mut invalid = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                invalid.push(RowIssue {
                    line: line_no,
                    doc_id: String::new(),
                    word_index: 0,
                    message: format!("not JSON: {e}"),
                });
                continue;
            }
        };
        let schema = value.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
        if schema != SCHEMA {
            return Err(DatasetError::Schema {
                path: origin.to_string(),
                line: line_no,
                found: schema.to_string(),
                expected: SCHEMA,
            });
        }
        let doc_id = value.get("doc_id").and_then(Value::as_str).unwrap_or("").to_string();
        let word_index = value.get("word_index").and_then(Value::as_u64).unwrap_or(0) as usize;
        let issue = |message: String| RowIssue {
            line: line_no,
            doc_id: doc_id.clone(),
            word_index,
            message,
        };
        match serde_json::from_value::<LabeledExample>(value.clone()) {
            Ok(ex) => match ex.check_category() {
                Ok(()) => rows.push((line_no, ex)),
                Err(m) => invalid.push(issue(m)),
            },
            Err(e) => invalid.push(issue(e.to_string())),
        }
    }
    if !invalid.is_empty() {
        return Err(DatasetError::InvalidRows(invalid));
    }

    let mut seen = HashMap::new();
    let mut misaligned = Vec::new();
    let mut segmented: HashMap<&str, Document> = HashMap::new();
    for (line, ex) in &rows {
        if let Some(first) = seen.insert((ex.doc_id.clone(), ex.word_index), *line) {
            misaligned.push(RowIssue {
                line: *line,
                doc_id: ex.doc_id.clone(),
                word_index: ex.word_index,
                message: format!("duplicate of line {first}"),
            });
            continue;
        }
        let doc = segmented
            .entry(ex.context_text.as_str())
            .or_insert_with(|| Document::new(ex.doc_id.clone(), &ex.context_text, seg.policy, seg.scheme));
        let expected = normalize(&ex.surface, seg.policy);
        match doc.spans.get(ex.word_index) {
            Some(span) if span.surface == expected.as_str() => {}
            Some(span) => misaligned.push(RowIssue {
                line: *line,
                doc_id: ex.doc_id.clone(),
                word_index: ex.word_index,
                message: format!("context has `{}` where the row says `{}`", span.surface, ex.surface),
            }),
            None => misaligned.push(RowIssue {
                line: *line,
                doc_id: ex.doc_id.clone(),
                word_index: ex.word_index,
                message: format!("context has only {} words", doc.spans.len()),
            }),
        }
    }
    if !misaligned.is_empty() {
        return Err(DatasetError::Alignment(misaligned));
    }
    Ok(rows.into_iter().map(|(_, ex)| ex).collect())
}

/// Writes the canonical form: one compact JSON object per line, fields in
/// declaration order.
pub fn write_dataset<W: Write>(mut out: W, examples: &[LabeledExample]) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn dataset_to_string(examples: &[LabeledExample]) -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, examples).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Counts by label and category.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSummary {
    pub rows: usize,
    pub by_label: BTreeMap<Label, usize>,
    pub by_category: BTreeMap<ErrorCategory, usize>,
}

impl DatasetSummary {
    pub fn of(examples: &[LabeledExample]) -> Self {
        let mut s = DatasetSummary {
            rows: examples.len(),
            ..Default::default()
        };
        for l in Label::ALL {
            s.by_label.insert(l, 0);
        }
        for c in ErrorCategory::ALL {
            s.by_category.insert(c, 0);
        }
        for ex in examples {
            *s.by_label.entry(ex.label).or_default() += 1;
            if let Some(c) = ex.category {
                *s.by_category.entry(c).or_default() += 1;
            }
        }
        s
    }

    pub fn label(&self, l: Label) -> usize {
        self.by_label.get(&l).copied().unwrap_or(0)
    }

    pub fn category(&self, c: ErrorCategory) -> usize {
        self.by_category.get(&c).copied().unwrap_or(0)
    }

    pub fn definitive(&self) -> usize {
        self.label(Label::Error) + self.label(Label::NonError)
    }

    pub fn positives(&self) -> usize {
        self.label(Label::Error)
    }

    /// Fixed-width table of label × category counts.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>6} {:>8} {:>6} {:>6}",
            "label", "digitization", "print", "scribal", "none", "total"
        );
        for l in Label::ALL {
            let n = self.label(l);
            let (d, p, s) = if l == Label::Error {
                (
                    self.category(ErrorCategory::Digitization),
                    self.category(ErrorCategory::Print),
                    self.category(ErrorCategory::Scribal),
                )
            } else {
                (0, 0, 0)
            };
            let none = n - (d + p + s).min(n);
            let _ = writeln!(out, "{:<10} {d:>12} {p:>6} {s:>8} {none:>6} {n:>6}", l.as_str());
        }
        let _ = writeln!(out, "{:<10} {:>44}", "total", self.rows);
        let def = self.definitive();
        let frac = if def == 0 {
            "n/a".to_string()
        } else {
            format!("{:.3}", self.positives() as f64 / def as f64)
        };
        let _ = writeln!(
            out,
            "definitive {def}; positive fraction {}/{def} = {frac}",
            self.positives()
        );
        out
    }
}

/// Maps free-text expert labels and notes onto the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportMapping {
    /// Upper-cased expert label (trailing `.` removed) → label.
    pub labels: Vec<(String, Label)>,
    /// Case-insensitive keyword in the notes → category, first match wins.
    pub categories: Vec<(String, ErrorCategory)>,
}

impl Default for ImportMapping {
    fn default() -> Self {
        ImportMapping {
            labels: vec![
                ("GOOD FLAG".into(), Label::Error),
                ("BAD FLAG".into(), Label::NonError),
                ("PLAUSIBLE".into(), Label::Plausible),
                ("UNCERTAIN".into(), Label::Uncertain),
            ],
            categories: vec![
                ("digitization".into(), ErrorCategory::Digitization),
                ("print".into(), ErrorCategory::Print),
                ("scribal".into(), ErrorCategory::Scribal),
            ],
        }
    }
}

/// Field names of the published record layout.
pub mod published {
    pub const DOC: &str = "Document";
    pub const WORD: &str = "Transmitted Word in Question";
    pub const LABEL: &str = "Expert Label";
    pub const ALTERNATIVE: &str = "Model-Suggested Alternative";
    pub const NOTES: &str = "Further Expert Notes";
    pub const INDEX: &str = "Word Index in Text";
    pub const TEXT: &str = "Text";
    pub const CATEGORY: &str = "Error Category";
}

/// Converts records in the published field layout (one JSON object per line)
/// into schema rows. Rows that cannot be mapped are reported, not dropped.
pub fn import_published(text: &str, mapping: &ImportMapping) -> Result<Vec<LabeledExample>, DatasetError> {
    use published::*;
    tracing::info!(labels = ?mapping.labels, categories = ?mapping.categories, "import mapping");
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = n + 1;
        let issue = |doc: &str, idx: usize, m: String| RowIssue {
            line: line_no,
            doc_id: doc.to_string(),
            word_index: idx,
            message: m,
        };
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                bad.push(issue("", 0, format!("not JSON: {e}")));
                continue;
            }
        };
        let s = |k: &str| v.get(k).and_then(Value::as_str).map(str::trim).unwrap_or("");
        let doc_id = match v.get(DOC) {
            Some(Value::String(d)) => d.clone(),
            Some(Value::Number(d)) => d.to_string(),
            _ => format!("row{line_no}"),
        };
        let index = match v.get(INDEX) {
            Some(Value::Number(i)) => i.as_u64().map(|i| i as usize),
            Some(Value::String(i)) => i.trim().parse().ok(),
            _ => None,
        };
        let Some(word_index) = index else {
            bad.push(issue(&doc_id, 0, format!("missing or bad `{INDEX}`")));
            continue;
        };
        let raw_label = s(LABEL).trim_end_matches('.').trim().to_uppercase();
        let Some(label) = mapping.labels.iter().find(|(k, _)| *k == raw_label).map(|(_, l)| *l) else {
            bad.push(issue(&doc_id, word_index, format!("unmapped expert label `{}`", s(LABEL))));
            continue;
        };
        let notes = s(NOTES).to_string();
        let category = if label == Label::Error {
            let hay = format!("{} {}", s(CATEGORY), notes).to_lowercase();
            match mapping.categories.iter().find(|(k, _)| hay.contains(&k.to_lowercase())) {
                Some((_, c)) => Some(*c),
                None => {
                    bad.push(issue(&doc_id, word_index, "error row names no category".into()));
                    continue;
                }
            }
        } else {
            None
        };
        out.push(LabeledExample {
            schema: SCHEMA.to_string(),
            doc_id,
            word_index,
            surface: s(WORD).to_string(),
            label,
            category,
            expert_notes: notes,
            suggested_alternative: Some(s(ALTERNATIVE).to_string()).filter(|a| !a.is_empty()),
            context_text: v.get(TEXT).and_then(Value::as_str).unwrap_or("").to_string(),
            part: None,
        });
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(DatasetError::InvalidRows(bad))
    }
}

/// Uniform sample without replacement of `n` lexical words, labeled
/// `non_error`. The result is ordered by corpus position.
pub fn sample_presumed_negatives(docs: &[Document], n: usize, seed: u64) -> Result<Vec<LabeledExample>, DatasetError> {
    let pool: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.lexical_spans().map(move |s| (d, s.word_index)))
        .collect();
    if n > pool.len() {
        return Err(DatasetError::Size {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|p| {
            let (d, i) = pool[p];
            let doc = &docs[d];
            LabeledExample {
                schema: SCHEMA.to_string(),
                doc_id: doc.id.clone(),
                word_index: i,
                surface: doc.spans[i].surface.clone(),
                label: Label::NonError,
                category: None,
                expert_notes: String::new(),
                suggested_alternative: None,
                context_text: doc.text.as_str().to_string(),
                part: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    CharSubstitute,
    WordNeighborSwap,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::CharSubstitute => "char_substitute",
            Channel::WordNeighborSwap => "word_neighbor_swap",
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char_substitute" => Ok(Channel::CharSubstitute),
            "word_neighbor_swap" => Ok(Channel::WordNeighborSwap),
            other => Err(format!("unknown channel `{other}` (expected char_substitute or word_neighbor_swap)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedError {
    pub doc_id: String,
    pub word_index: usize,
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    /// Corrupted normalized text; segments into the same number of words.
    pub text: String,
    pub flags: Vec<InjectedError>,
    /// Selected words left alone because no corruption applied.
    pub skipped: Vec<usize>,
}

/// Letters a character substitution draws from: every non-punctuation,
/// non-space character of `doc`, sorted.
pub fn document_alphabet(doc: &Document) -> Vec<char> {
    let set: std::collections::BTreeSet<char> = doc
        .text
        .as_str()
        .chars()
        .filter(|c| !c.is_whitespace() && !is_punctuation(*c))
        .collect();
    set.into_iter().collect()
}

/// Corrupts each lexical word of `doc` independently with probability
/// `rate`.
///
/// `stream` selects an independent random stream for the same `seed`, so
/// documents of a corpus can be corrupted separately and reproducibly.
pub fn inject_artificial_errors(
    doc: &Document,
    rate: f64,
    channel: Channel,
    seed: u64,
    stream: u64,
    index: Option<&NeighborIndex>,
) -> Result<Injection, DatasetError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(DatasetError::Rate(rate));
    }
    if doc.lexical_spans().next().is_none() {
        return Err(DatasetError::Size {
            requested: 1,
            available: 0,
        });
    }
    let index = match channel {
        Channel::WordNeighborSwap => Some(index.ok_or(DatasetError::MissingIndex)?),
        Channel::CharSubstitute => None,
    };
    let alphabet = document_alphabet(doc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut replacements = Vec::new();
    let mut flags = Vec::new();
    let mut skipped = Vec::new();
    for span in doc.lexical_spans() {
        if !rng.gen_bool(rate) {
            continue;
        }
        let replacement = match index {
            None => substitute_char(&span.surface, &alphabet, &mut rng),
            Some(index) => swap_neighbor(&span.surface, index, &mut rng)?,
        };
        match replacement {
            Some(r) => {
                flags.push(InjectedError {
                    doc_id: doc.id.clone(),
                    word_index: span.word_index,
                    original: span.surface.clone(),
                    replacement: r.clone(),
                });
                replacements.push((span.word_index, r));
            }
            None => {
                tracing::debug!(doc = %doc.id, index = span.word_index, word = %span.surface, "no applicable corruption");
                skipped.push(span.word_index);
            }
        }
    }
    if !skipped.is_empty() {
        tracing::info!(doc = %doc.id, skipped = skipped.len(), "selected words skipped for lack of a corruption");
    }
    Ok(Injection {
        text: doc.with_replacements(&replacements),
        flags,
        skipped,
    })
}

fn substitute_char(word: &str, alphabet: &[char], rng: &mut ChaCha8Rng) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    let pos = rng.gen_range(0..chars.len());
    let choices: Vec<char> = alphabet.iter().copied().filter(|c| *c != chars[pos]).collect();
    if choices.is_empty() {
        return None;
    }
    let mut out = chars;
    out[pos] = choices[rng.gen_range(0..choices.len())];
    Some(out.into_iter().collect())
}

fn swap_neighbor(word: &str, index: &NeighborIndex, rng: &mut ChaCha8Rng) -> Result<Option<String>, DatasetError> {
    let vocab = index.vocabulary();
    let options: Vec<&str> = index
        .neighbors(word, 1)?
        .ids()
        .map(|id| vocab.word(id))
        .filter(|w| *w != word && !w.chars().any(is_punctuation))
        .collect();
    if options.is_empty() {
        return Ok(None);
    }
    Ok(Some(options[rng.gen_range(0..options.len())].to_string()))
}

/// One example of an evaluation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalExample {
    pub doc_id: String,
    pub word_index: usize,
    pub y: bool,
    pub category: Option<ErrorCategory>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvaluationSet {
    pub examples: Vec<EvalExample>,
}

impl EvaluationSet {
    /// Merges definitive expert labels with presumed negatives. Presumed
    /// negatives that coincide with an expert row are dropped; with
    /// `expert_only` all of them are.
    pub fn build(expert: &[LabeledExample], presumed: &[LabeledExample], expert_only: bool) -> Self {
        let mut examples: Vec<EvalExample> = expert
            .iter()
            .filter(|e| e.label.is_definitive())
            .map(|e| EvalExample {
                doc_id: e.doc_id.clone(),
                word_index: e.word_index,
                y: e.label == Label::Error,
                category: e.category,
                provenance: Provenance::ExpertLabeled,
            })
            .collect();
        if !expert_only {
            let taken: HashSet<(&str, usize)> = expert.iter().map(LabeledExample::key).collect();
            examples.extend(presumed.iter().filter(|p| !taken.contains(&p.key())).map(|p| EvalExample {
                doc_id: p.doc_id.clone(),
                word_index: p.word_index,
                y: false,
                category: None,
                provenance: Provenance::PresumedNegative,
            }));
        }
        EvaluationSet { examples }
    }

    /// Every lexical word of `docs`; positives are the flagged ones.
    pub fn from_flags(docs: &[Document], flags: &[InjectedError]) -> Self {
        let flagged: HashSet<(&str, usize)> = flags.iter().map(|f| (f.doc_id.as_str(), f.word_index)).collect();
        let examples = docs
            .iter()
            .flat_map(|d| d.lexical_spans())
            .map(|s| EvalExample {
                doc_id: s.doc_id.clone(),
                word_index: s.word_index,
                y: flagged.contains(&(s.doc_id.as_str(), s.word_index)),
                category: None,
                provenance: Provenance::ExpertLabeled,
            })
            .collect();
        EvaluationSet { examples }
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.y).count();
        (pos, self.examples.len() - pos)
    }
}
