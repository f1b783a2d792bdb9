//! Sources of probabilities consumed by the detectors.
//!
//! A [`Provider`] declares which of three capabilities it offers: masked
//! conditionals over the vocabulary, pseudo-likelihoods of whole sequences,
//! and per-token replaced-token probabilities. Calling an undeclared
//! capability always returns [`ProviderError::Capability`].
//!
//! Everything is exchanged in natural-log space.

mod files;
mod ngram;

use std::sync::Arc;

pub use files::{
    DiscriminatorFile, LogitsFile, PseudoLikelihoodFile, DEFAULT_TOP_N, FLOOR_PROBABILITY_MIN,
    LOGITS_HEADER_PREFIX,
};
pub use ngram::{NgramModel, NgramTrainer};

use crate::candidates::{Vocabulary, WordId};
use crate::error::ProviderError;
use crate::text::{Document, WordSpan};

/// Tolerance on the total listed mass of a distribution.
pub const MASS_EPSILON: f64 = 1e-6;

/// The words of one document, identified for file-backed lookups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub doc_id: String,
    pub words: Vec<String>,
}

impl Context {
    pub fn new(doc_id: impl Into<String>, words: Vec<String>) -> Self {
        Context {
            doc_id: doc_id.into(),
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl From<&Document> for Context {
    fn from(doc: &Document) -> Self {
        Context::new(doc.id.clone(), doc.words())
    }
}

/// `context` with `mask_width` mask slots in place of the word at
/// `masked_index`.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalQuery<'a> {
    pub context: &'a Context,
    pub masked_index: usize,
    pub mask_width: usize,
}

impl<'a> ConditionalQuery<'a> {
    pub fn new(context: &'a Context, masked_index: usize) -> Self {
        ConditionalQuery {
            context,
            masked_index,
            mask_width: 1,
        }
    }

    pub fn with_width(mut self, mask_width: usize) -> Self {
        self.mask_width = mask_width;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.masked_index >= self.context.len() {
            return Err(ProviderError::QueryRange {
                index: self.masked_index,
                len: self.context.len(),
            });
        }
        if self.mask_width == 0 {
            return Err(ProviderError::MaskWidth);
        }
        Ok(())
    }
}

/// Probability mass over vocabulary words at a masked position, sorted by
/// descending probability (ties by word id).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    /// `(word id, natural-log probability)`.
    pub support: Vec<(WordId, f64)>,
    /// Sum of the listed probabilities.
    pub listed_mass: f64,
    /// True when `support` holds only the top entries.
    pub truncated: bool,
    /// Log probability assigned to any vocabulary word missing from
    /// `support`; `None` when the support is complete.
    pub floor_log_prob: Option<f64>,
}

impl ConditionalDistribution {
    /// Sorts, totals and optionally truncates a list of log probabilities.
    pub fn from_log_probs(mut entries: Vec<(WordId, f64)>, top_n: Option<usize>) -> Self {
        sort_support(&mut entries);
        let full_mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
        let full_len = entries.len();
        let truncated = top_n.is_some_and(|n| n < full_len);
        if let Some(n) = top_n {
            entries.truncate(n);
        }
        let listed_mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
        let floor_log_prob = truncated.then(|| {
            let missing = (full_mass - listed_mass).max(0.0);
            let unlisted = (full_len - entries.len()) as f64;
            (missing / unlisted).max(FLOOR_PROBABILITY_MIN).ln()
        });
        ConditionalDistribution {
            support: entries,
            listed_mass,
            truncated,
            floor_log_prob,
        }
    }

    pub fn top(&self, n: usize) -> &[(WordId, f64)] {
        &self.support[..n.min(self.support.len())]
    }

    /// Log probability of `id`, falling back to the floor for unlisted words.
    pub fn log_prob(&self, id: WordId) -> Option<f64> {
        self.support
            .iter()
            .find(|(w, _)| *w == id)
            .map(|(_, lp)| *lp)
            .or(self.floor_log_prob)
    }
}

pub(crate) fn sort_support(entries: &mut [(WordId, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Probability of the ground-truth word at every position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionProbabilities {
    pub per_position: Vec<f64>,
}

impl PositionProbabilities {
    /// Natural log of the product of all factors.
    pub fn log_pseudo_likelihood(&self) -> f64 {
        self.per_position.iter().map(|p| p.ln()).sum()
    }
}

/// Per-token replaced probabilities for every word of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenReplacedScores {
    pub per_word: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub conditional: bool,
    pub pseudo_likelihood: bool,
    pub replaced: bool,
}

pub trait Provider: Send + Sync {
    /// Stable identifier recorded in detector fingerprints.
    fn name(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    fn vocabulary(&self) -> Option<&Arc<Vocabulary>> {
        None
    }

    /// Distribution over the vocabulary at the masked position, limited to
    /// the `top_n` most probable words when given.
    fn conditional(
        &self,
        _query: &ConditionalQuery<'_>,
        _top_n: Option<usize>,
    ) -> Result<ConditionalDistribution, ProviderError> {
        Err(ProviderError::capability(self.name(), "conditional"))
    }

    /// Log probability of `word` filling the masked position. Words the
    /// provider did not list get its floor probability.
    fn log_prob(&self, _query: &ConditionalQuery<'_>, _word: &str) -> Result<f64, ProviderError> {
        Err(ProviderError::capability(self.name(), "conditional"))
    }

    /// Mask widths the provider can answer at `index`.
    fn mask_widths(&self, _context: &Context, _index: usize) -> Result<Vec<usize>, ProviderError> {
        Ok(vec![1])
    }

    /// True when [`Provider::token_log_probs`] can return values at all.
    fn has_token_conditionals(&self) -> bool {
        false
    }

    /// `log p(t_j | t_{-j})` for each token of the word at `index`, when the
    /// provider has token-level conditionals for it.
    fn token_log_probs(&self, _context: &Context, _index: usize) -> Result<Option<Vec<f64>>, ProviderError> {
        Ok(None)
    }

    /// Log pseudo-likelihood of `context`, optionally with the word at
    /// `variant.0` replaced by `variant.1`.
    fn pseudo_likelihood(
        &self,
        _context: &Context,
        _variant: Option<(usize, &str)>,
    ) -> Result<f64, ProviderError> {
        Err(ProviderError::capability(self.name(), "pseudo_likelihood"))
    }

    /// `log p̂(variant) - log p̂(original)`. Providers may override this with
    /// a cheaper exact computation.
    fn pseudo_likelihood_ratio(
        &self,
        context: &Context,
        index: usize,
        replacement: &str,
    ) -> Result<f64, ProviderError> {
        if context.words.get(index).map(String::as_str) == Some(replacement) {
            return Ok(0.0);
        }
        let variant = self.pseudo_likelihood(context, Some((index, replacement)))?;
        let original = self.pseudo_likelihood(context, None)?;
        Ok(variant - original)
    }

    /// Replaced-token probabilities for one word, aligned with its tokens.
    fn replaced_scores_for(&self, _context: &Context, _span: &WordSpan) -> Result<Vec<f64>, ProviderError> {
        Err(ProviderError::capability(self.name(), "replaced"))
    }

    /// Replaced-token probabilities for every word of a document.
    fn replaced_scores(&self, context: &Context, spans: &[WordSpan]) -> Result<TokenReplacedScores, ProviderError> {
        let per_word = spans
            .iter()
            .map(|s| self.replaced_scores_for(context, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenReplacedScores { per_word })
    }
}

/// Every vocabulary word equally likely.
#[derive(Debug, Clone)]
pub struct UniformProvider {
    vocab: Arc<Vocabulary>,
}

impl UniformProvider {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        UniformProvider { vocab }
    }

    fn log_uniform(&self) -> f64 {
        -(self.vocab.len() as f64).ln()
    }
}

impl Provider for UniformProvider {
    fn name(&self) -> String {
        "uniform".to_string()
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
        let lp = self.log_uniform();
        let entries = (0..self.vocab.len() as WordId).map(|id| (id, lp)).collect();
        Ok(ConditionalDistribution::from_log_probs(entries, top_n))
    }

    fn log_prob(&self, query: &ConditionalQuery<'_>, _word: &str) -> Result<f64, ProviderError> {
        query.validate()?;
        Ok(self.log_uniform())
    }
}
