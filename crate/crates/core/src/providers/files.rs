//! File-backed providers written by external model exporters.
//!
//! Three line-oriented UTF-8 formats, tab-separated, `#` lines ignored
//! (except the logits header):
//!
//! * logits: header `#mlm-logits v1 vocab=<sha256>` then
//!   `doc\tindex\tmask_width\tword:prob,word:prob,…`. A mask-width field of
//!   `t<j>` instead carries `token:prob`, the conditional of the word's
//!   `j`-th token given the rest of the sequence.
//! * pseudo-likelihood: `doc\tvariant_index\tvariant_word\tlogp`; the
//!   unmodified sequence uses `-` for both index and word.
//! * discriminator: `doc\tindex\tp1,p2,…` with an optional fourth column of
//!   space-separated tokens the scores belong to.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::candidates::{Vocabulary, WordId};
use crate::error::ProviderError;
use crate::text::WordSpan;

use super::{
    sort_support, Capabilities, ConditionalDistribution, ConditionalQuery, Context, Provider, MASS_EPSILON,
};

pub const LOGITS_HEADER_PREFIX: &str = "#mlm-logits v1";
/// Entries an exporter keeps per position unless told otherwise.
pub const DEFAULT_TOP_N: usize = 128;
/// Smallest probability ever handed out for an unlisted word.
pub const FLOOR_PROBABILITY_MIN: f64 = 1e-12;

fn read_text(path: &Path) -> Result<String, ProviderError> {
    std::fs::read_to_string(path).map_err(|source| ProviderError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, message: impl Into<String>) -> ProviderError {
        ProviderError::Parse {
            path: self.path.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn index(&self, field: &str) -> Result<usize, ProviderError> {
        field
            .parse()
            .map_err(|_| self.err(format!("bad word index `{field}`")))
    }

    fn prob(&self, field: &str) -> Result<f64, ProviderError> {
        let p: f64 = field
            .trim()
            .parse()
            .map_err(|_| self.err(format!("bad probability `{field}`")))?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(self.err(format!("probability {p} outside (0, 1]")));
        }
        Ok(p)
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn split_entry<'a>(cx: &LineCtx<'_>, entry: &'a str) -> Result<(&'a str, f64), ProviderError> {
    let (word, p) = entry
        .rsplit_once(':')
        .ok_or_else(|| cx.err(format!("entry `{entry}` is not word:prob")))?;
    Ok((word, cx.prob(p)?))
}

#[derive(Debug, Clone)]
struct LogitsRecord {
    support: Vec<(WordId, f64)>,
    listed_mass: f64,
    floor_log_prob: f64,
}

/// Precomputed top-N masked conditionals.
#[derive(Debug)]
pub struct LogitsFile {
    name: String,
    vocab: Arc<Vocabulary>,
    records: HashMap<(String, usize, usize), LogitsRecord>,
    widths: HashMap<(String, usize), Vec<usize>>,
    tokens: HashMap<(String, usize), BTreeMap<usize, f64>>,
}

impl LogitsFile {
    pub fn load(path: &Path, vocab: Arc<Vocabulary>) -> Result<Self, ProviderError> {
        let text = read_text(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "logits".into());
        Self::parse(&text, &path.display().to_string(), name, vocab)
    }

    pub fn parse(text: &str, origin: &str, name: String, vocab: Arc<Vocabulary>) -> Result<Self, ProviderError> {
        let header = text.lines().next().unwrap_or("");
        let cx = LineCtx { path: origin, line: 1 };
        let rest = header
            .strip_prefix(LOGITS_HEADER_PREFIX)
            .ok_or_else(|| cx.err(format!("missing `{LOGITS_HEADER_PREFIX} vocab=<sha256>` header")))?;
        let mut found_hash = None;
        let mut name = name;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("vocab", h)) => found_hash = Some(h.to_string()),
                Some(("name", n)) => name = n.to_string(),
                _ => {}
            }
        }
        let found = found_hash.ok_or_else(|| cx.err("header lacks vocab=<sha256>"))?;
        let expected = vocab.sha256();
        if found != expected {
            return Err(ProviderError::VocabularyMismatch { expected, found });
        }

        let v = vocab.len();
        let mut records = HashMap::new();
        let mut widths: HashMap<(String, usize), Vec<usize>> = HashMap::new();
        let mut tokens: HashMap<(String, usize), BTreeMap<usize, f64>> = HashMap::new();
        for (line, l) in data_lines(text) {
            let cx = LineCtx { path: origin, line };
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() != 4 {
                return Err(cx.err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let doc = fields[0].to_string();
            let index = cx.index(fields[1])?;
            if let Some(j) = fields[2].strip_prefix('t') {
                let j: usize = j.parse().map_err(|_| cx.err(format!("bad token slot `{}`", fields[2])))?;
                let (_, p) = split_entry(&cx, fields[3])?;
                if tokens.entry((doc, index)).or_default().insert(j, p.ln()).is_some() {
                    return Err(cx.err(format!("duplicate token slot t{j}")));
                }
                continue;
            }
            let width = cx.index(fields[2])?;
            if width == 0 {
                return Err(cx.err("mask width must be at least 1"));
            }
            let mut support = Vec::new();
            let mut mass = 0.0;
            for entry in fields[3].split(',').filter(|e| !e.is_empty()) {
                let (word, p) = split_entry(&cx, entry)?;
                let id = vocab
                    .id_of(word)
                    .ok_or_else(|| cx.err(format!("`{word}` is not in the vocabulary")))?;
                mass += p;
                support.push((id, p.ln()));
            }
            if mass > 1.0 + MASS_EPSILON {
                return Err(cx.err(format!("listed mass {mass} exceeds 1")));
            }
            sort_support(&mut support);
            let unlisted = v.saturating_sub(support.len());
            let floor = if unlisted == 0 {
                FLOOR_PROBABILITY_MIN
            } else {
                ((1.0 - mass).max(0.0) / unlisted as f64).max(FLOOR_PROBABILITY_MIN)
            };
            let record = LogitsRecord {
                support,
                listed_mass: mass,
                floor_log_prob: floor.ln(),
            };
            if records.insert((doc.clone(), index, width), record).is_some() {
                return Err(cx.err(format!("duplicate record for ({doc}, {index}, {width})")));
            }
            widths.entry((doc, index)).or_default().push(width);
        }
        for w in widths.values_mut() {
            w.sort_unstable();
        }
        Ok(LogitsFile {
            name,
            vocab,
            records,
            widths,
            tokens,
        })
    }

    fn record(&self, query: &ConditionalQuery<'_>) -> Result<&LogitsRecord, ProviderError> {
        let key = (query.context.doc_id.clone(), query.masked_index, query.mask_width);
        self.records.get(&key).ok_or_else(|| ProviderError::Coverage {
            doc: key.0,
            index: key.1,
            detail: format!(" at mask width {}", key.2),
        })
    }

    /// Formats a header line for `vocab`.
    pub fn header(vocab: &Vocabulary) -> String {
        format!("{LOGITS_HEADER_PREFIX} vocab={}", vocab.sha256())
    }

    /// Formats one record line.
    pub fn record_line(doc: &str, index: usize, width: usize, entries: &[(&str, f64)]) -> String {
        let mut s = format!("{doc}\t{index}\t{width}\t");
        for (i, (w, p)) in entries.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{w}:{p}");
        }
        s
    }
}

impl Provider for LogitsFile {
    fn name(&self) -> String {
        format!("logits({})", self.name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            conditional: true,
            ..Default::default()
        }
    }

    fn vocabulary(&self) -> Option<&Arc<Vocabulary>> {
        Some(&self.vocab)
    }

    fn conditional(
        &self,
        query: &ConditionalQuery<'_>,
        top_n: Option<usize>,
    ) -> Result<ConditionalDistribution, ProviderError> {
        query.validate()?;
        let rec = self.record(query)?;
        let mut support = rec.support.clone();
        let mut listed_mass = rec.listed_mass;
        if let Some(n) = top_n {
            if n < support.len() {
                support.truncate(n);
                listed_mass = support.iter().map(|(_, lp)| lp.exp()).sum();
            }
        }
        let truncated = support.len() < self.vocab.len();
        Ok(ConditionalDistribution {
            support,
            listed_mass,
            truncated,
            floor_log_prob: truncated.then_some(rec.floor_log_prob),
        })
    }

    fn log_prob(&self, query: &ConditionalQuery<'_>, word: &str) -> Result<f64, ProviderError> {
        query.validate()?;
        let rec = self.record(query)?;
        Ok(self
            .vocab
            .id_of(word)
            .and_then(|id| rec.support.iter().find(|(w, _)| *w == id).map(|(_, lp)| *lp))
            .unwrap_or(rec.floor_log_prob))
    }

    fn mask_widths(&self, context: &Context, index: usize) -> Result<Vec<usize>, ProviderError> {
        self.widths
            .get(&(context.doc_id.clone(), index))
            .cloned()
            .ok_or_else(|| ProviderError::Coverage {
                doc: context.doc_id.clone(),
                index,
                detail: String::new(),
            })
    }

    fn has_token_conditionals(&self) -> bool {
        !self.tokens.is_empty()
    }

    fn token_log_probs(&self, context: &Context, index: usize) -> Result<Option<Vec<f64>>, ProviderError> {
        Ok(self
            .tokens
            .get(&(context.doc_id.clone(), index))
            .map(|slots| slots.values().copied().collect()))
    }
}

#[derive(Debug, Default)]
struct DocPseudoLikelihoods {
    original: Option<f64>,
    variants: HashMap<(usize, String), f64>,
}

/// Precomputed sequence pseudo-likelihoods.
#[derive(Debug)]
pub struct PseudoLikelihoodFile {
    name: String,
    docs: HashMap<String, DocPseudoLikelihoods>,
}

impl PseudoLikelihoodFile {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = read_text(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pll".into());
        Self::parse(&text, &path.display().to_string(), name)
    }

    pub fn parse(text: &str, origin: &str, name: String) -> Result<Self, ProviderError> {
        let mut docs: HashMap<String, DocPseudoLikelihoods> = HashMap::new();
        for (line, l) in data_lines(text) {
            let cx = LineCtx { path: origin, line };
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() != 4 {
                return Err(cx.err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let logp: f64 = fields[3]
                .trim()
                .parse()
                .map_err(|_| cx.err(format!("bad log probability `{}`", fields[3])))?;
            if !logp.is_finite() || logp > 0.0 {
                return Err(cx.err(format!("log probability {logp} must be finite and <= 0")));
            }
            let entry = docs.entry(fields[0].to_string()).or_default();
            if fields[1] == "-" {
                if entry.original.replace(logp).is_some() {
                    return Err(cx.err("duplicate original-sequence row"));
                }
            } else {
                let index = cx.index(fields[1])?;
                if entry.variants.insert((index, fields[2].to_string()), logp).is_some() {
                    return Err(cx.err(format!("duplicate variant ({index}, {})", fields[2])));
                }
            }
        }
        Ok(PseudoLikelihoodFile { name, docs })
    }
}

impl Provider for PseudoLikelihoodFile {
    fn name(&self) -> String {
        format!("pll({})", self.name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            pseudo_likelihood: true,
            ..Default::default()
        }
    }

    fn pseudo_likelihood(&self, context: &Context, variant: Option<(usize, &str)>) -> Result<f64, ProviderError> {
        let missing = |index: usize, detail: String| ProviderError::Coverage {
            doc: context.doc_id.clone(),
            index,
            detail,
        };
        let doc = self
            .docs
            .get(&context.doc_id)
            .ok_or_else(|| missing(0, " (document absent)".into()))?;
        let original = || doc.original.ok_or_else(|| missing(0, " (no original-sequence row)".into()));
        match variant {
            None => original(),
            Some((index, word)) => {
                if context.words.get(index).map(String::as_str) == Some(word) {
                    return original();
                }
                doc.variants
                    .get(&(index, word.to_string()))
                    .copied()
                    .ok_or_else(|| missing(index, format!(" for variant `{word}`")))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct DiscriminatorRecord {
    doc: String,
    index: usize,
    scores: Vec<f64>,
    tokens: Option<Vec<String>>,
}

/// Precomputed replaced-token probabilities.
#[derive(Debug)]
pub struct DiscriminatorFile {
    name: String,
    order: Vec<DiscriminatorRecord>,
    by_key: HashMap<(String, usize), usize>,
}

impl DiscriminatorFile {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = read_text(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "discriminator".into());
        Self::parse(&text, &path.display().to_string(), name)
    }

    pub fn parse(text: &str, origin: &str, name: String) -> Result<Self, ProviderError> {
        let mut order = Vec::new();
        let mut by_key = HashMap::new();
        for (line, l) in data_lines(text) {
            let cx = LineCtx { path: origin, line };
            let fields: Vec<&str> = l.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(cx.err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
            }
            let index = cx.index(fields[1])?;
            let scores = fields[2]
                .split(',')
                .map(|p| {
                    let v: f64 = p.trim().parse().map_err(|_| cx.err(format!("bad score `{p}`")))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(cx.err(format!("score {v} outside [0, 1]")));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let tokens = fields
                .get(3)
                .map(|t| t.split(' ').map(String::from).collect::<Vec<_>>());
            if let Some(t) = &tokens {
                if t.len() != scores.len() {
                    return Err(cx.err(format!("{} scores for {} stored tokens", scores.len(), t.len())));
                }
            }
            let key = (fields[0].to_string(), index);
            if by_key.insert(key.clone(), order.len()).is_some() {
                return Err(cx.err(format!("duplicate record for ({}, {index})", key.0)));
            }
            order.push(DiscriminatorRecord {
                doc: key.0,
                index,
                scores,
                tokens,
            });
        }
        Ok(DiscriminatorFile { name, order, by_key })
    }

    /// Serializes the records in file order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for r in &self.order {
            let scores: Vec<String> = r.scores.iter().map(|s| s.to_string()).collect();
            let _ = write!(out, "{}\t{}\t{}", r.doc, r.index, scores.join(","));
            if let Some(t) = &r.tokens {
                let _ = write!(out, "\t{}", t.join(" "));
            }
            out.push('\n');
        }
        out
    }
}

impl Provider for DiscriminatorFile {
    fn name(&self) -> String {
        format!("discriminator({})", self.name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            replaced: true,
            ..Default::default()
        }
    }

    fn replaced_scores_for(&self, context: &Context, span: &WordSpan) -> Result<Vec<f64>, ProviderError> {
        let pos = self
            .by_key
            .get(&(context.doc_id.clone(), span.word_index))
            .ok_or_else(|| ProviderError::Coverage {
                doc: context.doc_id.clone(),
                index: span.word_index,
                detail: String::new(),
            })?;
        let rec = &self.order[*pos];
        let aligned = match &rec.tokens {
            Some(stored) => stored.concat() == span.surface,
            None => rec.scores.len() == span.tokens.len(),
        };
        if !aligned {
            let stored = rec
                .tokens
                .clone()
                .unwrap_or_else(|| vec![format!("<{} unnamed tokens>", rec.scores.len())]);
            return Err(ProviderError::Alignment {
                doc: context.doc_id.clone(),
                index: span.word_index,
                stored,
                word: span.tokens.clone(),
            });
        }
        Ok(rec.scores.clone())
    }
}
