//! Error scoring functions `T(w, i)`.
//!
//! All scores for `ccr` and `pllr` are natural-log ratios; discriminator
//! scores are probabilities; judge scores are the rescaled `1..m` reply.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{NeighborIndex, WordId};
use crate::error::DetectorError;
use crate::providers::{ConditionalQuery, Context, Provider};
use crate::text::{Document, WordSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Ccr,
    Pllr,
    Discriminator,
    Llm,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Ccr => "ccr",
            DetectorKind::Pllr => "pllr",
            DetectorKind::Discriminator => "discriminator",
            DetectorKind::Llm => "llm",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ccr" => Ok(DetectorKind::Ccr),
            "pllr" => Ok(DetectorKind::Pllr),
            "discriminator" => Ok(DetectorKind::Discriminator),
            "llm" => Ok(DetectorKind::Llm),
            other => Err(DetectorError::Config(format!(
                "unknown detector `{other}` (expected ccr, pllr, discriminator or llm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenAggregation {
    #[default]
    Max,
    Mean,
}

impl TokenAggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            TokenAggregation::Max => "max",
            TokenAggregation::Mean => "mean",
        }
    }

    pub fn apply(&self, scores: &[f64]) -> Option<f64> {
        if scores.is_empty() {
            return None;
        }
        Some(match self {
            TokenAggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            TokenAggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        })
    }
}

impl FromStr for TokenAggregation {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(TokenAggregation::Max),
            "mean" => Ok(TokenAggregation::Mean),
            other => Err(DetectorError::Config(format!(
                "unknown token aggregation `{other}` (expected max or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub radius: usize,
    /// Keep only candidates among the provider's `b` most probable words.
    pub beam_truncation: Option<usize>,
    pub token_aggregation: TokenAggregation,
    /// Emitted when a word has no candidates. Always 0.
    pub zero_score: f64,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        DetectorConfig {
            kind,
            radius: 1,
            beam_truncation: None,
            token_aggregation: TokenAggregation::Max,
            zero_score: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.beam_truncation == Some(0) {
            return Err(DetectorError::Config("beam_truncation must be at least 1".into()));
        }
        if self.zero_score != 0.0 {
            return Err(DetectorError::Config("zero_score is fixed at 0".into()));
        }
        Ok(())
    }
}

/// Detector output for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorScore {
    pub doc_id: String,
    pub word_index: usize,
    pub surface: String,
    pub score: f64,
    pub detector: String,
    pub best_alternative: Option<String>,
    /// Set by the judge when no score could be parsed.
    #[serde(default)]
    pub abstained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawScore {
    pub score: f64,
    pub best_alternative: Option<String>,
    pub abstained: bool,
}

impl RawScore {
    fn plain(score: f64, best_alternative: Option<String>) -> Self {
        RawScore {
            score,
            best_alternative,
            abstained: false,
        }
    }
}

fn observed_log_chance(provider: &dyn Provider, ctx: &Context, index: usize, surface: &str) -> Result<f64, DetectorError> {
    if let Some(tokens) = provider.token_log_probs(ctx, index)? {
        if let Some(min) = tokens.iter().copied().reduce(f64::min) {
            return Ok(min);
        }
    }
    Ok(provider.log_prob(&ConditionalQuery::new(ctx, index), surface)?)
}

/// Chance-confidence ratio of the word at `span.word_index`.
pub fn ccr_score(
    span: &WordSpan,
    ctx: &Context,
    provider: &dyn Provider,
    index: &NeighborIndex,
    config: &DetectorConfig,
) -> Result<RawScore, DetectorError> {
    let i = span.word_index;
    let set = index.neighbors(&span.surface, config.radius)?;
    if set.is_empty() {
        return Ok(RawScore::plain(config.zero_score, None));
    }
    let vocab = index.vocabulary();
    let chance = observed_log_chance(provider, ctx, i, &span.surface)?;

    let mut best: Option<(f64, WordId)> = None;
    for width in provider.mask_widths(ctx, i)? {
        let query = ConditionalQuery::new(ctx, i).with_width(width);
        let beam: Option<HashSet<WordId>> = match config.beam_truncation {
            Some(b) => Some(provider.conditional(&query, Some(b))?.support.iter().map(|(id, _)| *id).collect()),
            None => None,
        };
        for c in &set.members {
            let kept = c.distance == 0 || beam.as_ref().is_none_or(|top| top.contains(&c.id));
            if !kept {
                continue;
            }
            let lp = provider.log_prob(&query, vocab.word(c.id))?;
            if best.is_none_or(|(b, _)| lp > b) {
                best = Some((lp, c.id));
            }
        }
    }
    match best {
        // Observed word out of vocabulary and nothing survived the beam.
        None => Ok(RawScore::plain(config.zero_score, None)),
        Some((confidence, id)) => {
            let score = if vocab.id_of(&span.surface).is_none() {
                // Out-of-vocabulary words always have the identity candidate
                // available too.
                (confidence - chance).max(0.0)
            } else {
                confidence - chance
            };
            Ok(RawScore::plain(score, Some(vocab.word(id).to_string())))
        }
    }
}

/// Pseudo-log-likelihood ratio of the best single-word substitution.
pub fn pllr_score(
    span: &WordSpan,
    ctx: &Context,
    provider: &dyn Provider,
    index: &NeighborIndex,
    config: &DetectorConfig,
) -> Result<RawScore, DetectorError> {
    let i = span.word_index;
    let set = index.neighbors(&span.surface, config.radius)?;
    if set.is_empty() {
        return Ok(RawScore::plain(config.zero_score, None));
    }
    let vocab = index.vocabulary();
    // The identity variant scores exactly 0.
    let mut best = (0.0, span.surface.clone());
    for c in &set.members {
        let word = vocab.word(c.id);
        if word == span.surface {
            continue;
        }
        let r = provider.pseudo_likelihood_ratio(ctx, i, word)?;
        if r > best.0 {
            best = (r, word.to_string());
        }
    }
    Ok(RawScore::plain(best.0, Some(best.1)))
}

/// Aggregated replaced-token probability of one word.
pub fn discriminator_score(
    span: &WordSpan,
    ctx: &Context,
    provider: &dyn Provider,
    config: &DetectorConfig,
) -> Result<RawScore, DetectorError> {
    let scores = provider.replaced_scores_for(ctx, span)?;
    let s = config.token_aggregation.apply(&scores).unwrap_or(config.zero_score);
    Ok(RawScore::plain(s, None))
}

/// Something that scores one word in context.
pub trait Detector: Send + Sync {
    /// Stable description of the detector recorded with every score.
    fn fingerprint(&self) -> String;

    fn score_word(&self, doc: &Document, ctx: &Context, span: &WordSpan) -> Result<RawScore, DetectorError>;
}

/// CCR, PLLR or discriminator scoring over a provider.
pub struct ProviderDetector {
    config: DetectorConfig,
    provider: Arc<dyn Provider>,
    index: Option<Arc<NeighborIndex>>,
}

impl ProviderDetector {
    pub fn new(
        config: DetectorConfig,
        provider: Arc<dyn Provider>,
        index: Option<Arc<NeighborIndex>>,
    ) -> Result<Self, DetectorError> {
        config.validate()?;
        let caps = provider.capabilities();
        let (needed, ok) = match config.kind {
            DetectorKind::Ccr => ("conditional", caps.conditional),
            DetectorKind::Pllr => ("pseudo_likelihood", caps.pseudo_likelihood),
            DetectorKind::Discriminator => ("replaced", caps.replaced),
            DetectorKind::Llm => {
                return Err(DetectorError::Config("the llm detector is built from a judge, not a provider".into()))
            }
        };
        if !ok {
            return Err(crate::error::ProviderError::capability(provider.name(), needed).into());
        }
        let needs_index = matches!(config.kind, DetectorKind::Ccr | DetectorKind::Pllr);
        if needs_index {
            let idx = index
                .as_ref()
                .ok_or_else(|| DetectorError::Config(format!("{} needs a vocabulary index", config.kind)))?;
            if config.radius > idx.max_radius() {
                return Err(crate::error::CandidateError::UnsupportedRadius {
                    requested: config.radius,
                    max: idx.max_radius(),
                }
                .into());
            }
        }
        Ok(ProviderDetector {
            config,
            provider,
            index,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn index(&self) -> &NeighborIndex {
        self.index.as_deref().expect("checked in new")
    }
}

impl Detector for ProviderDetector {
    fn fingerprint(&self) -> String {
        let c = &self.config;
        let provider = self.provider.name();
        match c.kind {
            DetectorKind::Ccr => {
                let chance = if self.provider.has_token_conditionals() {
                    "token-min"
                } else {
                    "word"
                };
                let beam = c.beam_truncation.map_or("none".to_string(), |b| b.to_string());
                format!("ccr[k={};beam={beam};chance={chance};provider={provider}]", c.radius)
            }
            DetectorKind::Pllr => format!("pllr[k={};width=1;provider={provider}]", c.radius),
            DetectorKind::Discriminator => {
                format!("discriminator[agg={};provider={provider}]", c.token_aggregation.as_str())
            }
            DetectorKind::Llm => unreachable!("rejected in new"),
        }
    }

    fn score_word(&self, _doc: &Document, ctx: &Context, span: &WordSpan) -> Result<RawScore, DetectorError> {
        let p = self.provider.as_ref();
        match self.config.kind {
            DetectorKind::Ccr => ccr_score(span, ctx, p, self.index(), &self.config),
            DetectorKind::Pllr => pllr_score(span, ctx, p, self.index(), &self.config),
            DetectorKind::Discriminator => discriminator_score(span, ctx, p, &self.config),
            DetectorKind::Llm => unreachable!("rejected in new"),
        }
    }
}

/// Scores every lexical word of `docs`, best first.
///
/// Ties are broken by `(doc_id, word_index)`; with `top_n` only the first
/// `top_n` entries are kept.
pub fn rank_corpus(
    docs: &[Document],
    detector: &dyn Detector,
    top_n: Option<usize>,
) -> Result<Vec<ErrorScore>, DetectorError> {
    let fingerprint = detector.fingerprint();
    let contexts: Vec<Context> = docs.iter().map(Context::from).collect();
    let work: Vec<(usize, &WordSpan)> = docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.lexical_spans().map(move |s| (d, s)))
        .collect();
    let mut scores = work
        .par_iter()
        .map(|&(d, span)| {
            let raw = detector
                .score_word(&docs[d], &contexts[d], span)
                .map_err(|e| DetectorError::At {
                    doc: span.doc_id.clone(),
                    index: span.word_index,
                    source: Box::new(e),
                })?;
            if !raw.score.is_finite() {
                return Err(DetectorError::At {
                    doc: span.doc_id.clone(),
                    index: span.word_index,
                    source: Box::new(DetectorError::Config(format!("non-finite score {}", raw.score))),
                });
            }
            Ok(ErrorScore {
                doc_id: span.doc_id.clone(),
                word_index: span.word_index,
                surface: span.surface.clone(),
                score: raw.score,
                detector: fingerprint.clone(),
                best_alternative: raw.best_alternative,
                abstained: raw.abstained,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_ranked(&mut scores);
    if let Some(n) = top_n {
        scores.truncate(n);
    }
    Ok(scores)
}

/// Descending score, then ascending `(doc_id, word_index)`.
pub fn sort_ranked(scores: &mut [ErrorScore]) {
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then(a.word_index.cmp(&b.word_index))
    });
}

pub const SCORE_HEADER: [&str; 6] = ["doc_id", "word_index", "surface", "score", "detector", "best_alternative"];

/// `%.9g`: nine significant digits, trailing zeros dropped.
pub fn format_score(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_fraction(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_scores<W: Write>(out: W, scores: &[ErrorScore]) -> Result<(), DetectorError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SCORE_HEADER)?;
    for s in scores {
        w.write_record([
            s.doc_id.as_str(),
            &s.word_index.to_string(),
            &s.surface,
            &format_score(s.score),
            &s.detector,
            s.best_alternative.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R, origin: &str) -> Result<Vec<ErrorScore>, DetectorError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let bad = |message: String| DetectorError::ScoreFile {
        path: origin.to_string(),
        message,
    };
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(bad(format!(
            "header must be `{}`, found `{}`",
            SCORE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut scores = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let word_index = rec[1]
            .parse()
            .map_err(|_| bad(format!("line {line}: bad word_index `{}`", &rec[1])))?;
        let score: f64 = rec[3]
            .parse()
            .map_err(|_| bad(format!("line {line}: bad score `{}`", &rec[3])))?;
        if !score.is_finite() {
            return Err(bad(format!("line {line}: non-finite score")));
        }
        scores.push(ErrorScore {
            doc_id: rec[0].to_string(),
            word_index,
            surface: rec[2].to_string(),
            score,
            detector: rec[4].to_string(),
            best_alternative: (!rec[5].is_empty()).then(|| rec[5].to_string()),
            abstained: false,
        });
    }
    Ok(scores)
}
