//! Bidirectional bigram reference model.
//!
//! The masked conditional combines the left and right bigrams with add-one
//! smoothing:
//!
//! ```text
//! p(w | l, r) ∝ P(w | l) · P(r | w) = (c(l,w)+1)/(c(l)+S) · (c(w,r)+1)/(c(w)+S)
//! ```
//!
//! where `S` is the size of the successor outcome space (vocabulary plus
//! unknown and end-of-sequence). Sequences are padded with begin/end
//! markers. The normalizer over the vocabulary splits into a constant, two
//! per-symbol sums and one sparse intersection, so a single lookup costs
//! `O(min(|succ(l)|, |pred(r)|))` instead of `O(V)`.
//!
//! Mask width is ignored: a multi-slot mask is answered like a single one.

use std::collections::HashMap;
use std::sync::Arc;

use crate::candidates::{Vocabulary, WordId};
use crate::error::ProviderError;
use crate::text::{Document, NormalizationPolicy};

use super::{Capabilities, ConditionalDistribution, ConditionalQuery, Context, PositionProbabilities, Provider};

/// Accumulates bigram counts; consumed by [`NgramTrainer::build`].
#[derive(Debug, Default)]
pub struct NgramTrainer {
    fixed_vocab: Option<Arc<Vocabulary>>,
    seen_order: Vec<String>,
    seen: HashMap<String, u32>,
    sequences: Vec<Vec<u32>>,
}

impl NgramTrainer {
    /// The vocabulary becomes every word seen during training, in
    /// first-seen order.
    pub fn new() -> Self {
        Self::default()
    }

    /// Train against a fixed vocabulary; out-of-vocabulary training words
    /// count as a shared unknown symbol.
    pub fn with_vocabulary(vocab: Arc<Vocabulary>) -> Self {
        NgramTrainer {
            fixed_vocab: Some(vocab),
            ..Default::default()
        }
    }

    pub fn add_sequence<S: AsRef<str>>(&mut self, words: &[S]) {
        let mut seq = Vec::with_capacity(words.len());
        for w in words {
            let w = w.as_ref();
            let local = match self.seen.get(w) {
                Some(&id) => id,
                None => {
                    let id = self.seen_order.len() as u32;
                    self.seen.insert(w.to_string(), id);
                    self.seen_order.push(w.to_string());
                    id
                }
            };
            seq.push(local);
        }
        self.sequences.push(seq);
    }

    pub fn add_document(&mut self, doc: &Document) {
        let words = doc.words();
        self.add_sequence(&words);
    }

    pub fn build(self) -> Result<NgramModel, ProviderError> {
        let vocab = match self.fixed_vocab {
            Some(v) => v,
            None => Arc::new(
                Vocabulary::from_words(self.seen_order.iter(), NormalizationPolicy::Compose).map_err(|e| {
                    ProviderError::Parse {
                        path: "<training corpus>".into(),
                        line: 0,
                        message: e.to_string(),
                    }
                })?,
            ),
        };
        let v = vocab.len() as u32;
        let (unk, bos, eos) = (v, v + 1, v + 2);
        let symbols = (v + 3) as usize;
        let remap: Vec<u32> = self
            .seen_order
            .iter()
            .map(|w| vocab.id_of(w).unwrap_or(unk))
            .collect();

        let mut bigrams: HashMap<(u32, u32), u32> = HashMap::new();
        for seq in &self.sequences {
            let mut prev = bos;
            for &local in seq {
                let cur = remap[local as usize];
                *bigrams.entry((prev, cur)).or_insert(0) += 1;
                prev = cur;
            }
            *bigrams.entry((prev, eos)).or_insert(0) += 1;
        }

        let mut succ: Vec<Vec<(u32, u32)>> = vec![Vec::new(); symbols];
        let mut pred: Vec<Vec<(u32, u32)>> = vec![Vec::new(); symbols];
        for (&(a, b), &c) in &bigrams {
            succ[a as usize].push((b, c));
            pred[b as usize].push((a, c));
        }
        for list in succ.iter_mut().chain(pred.iter_mut()) {
            list.sort_unstable();
        }
        let left_total: Vec<u64> = succ
            .iter()
            .map(|l| l.iter().map(|&(_, c)| c as u64).sum())
            .collect();
        // Successor outcomes: vocabulary words, unknown, end marker.
        let outcomes = (v + 2) as f64;
        let denom: Vec<f64> = left_total.iter().map(|&t| t as f64 + outcomes).collect();

        let constant: f64 = (0..v as usize).map(|w| 1.0 / denom[w]).sum();
        let left_sum: Vec<f64> = succ
            .iter()
            .map(|l| {
                l.iter()
                    .filter(|&&(w, _)| w < v)
                    .map(|&(w, c)| c as f64 / denom[w as usize])
                    .sum()
            })
            .collect();
        let right_sum: Vec<f64> = pred
            .iter()
            .map(|l| {
                l.iter()
                    .filter(|&&(w, _)| w < v)
                    .map(|&(w, c)| c as f64 / denom[w as usize])
                    .sum()
            })
            .collect();

        Ok(NgramModel {
            vocab,
            succ,
            pred,
            denom,
            outcomes,
            constant,
            left_sum,
            right_sum,
            unk,
            bos,
            eos,
        })
    }
}

/// Immutable trained bigram model.
#[derive(Debug)]
pub struct NgramModel {
    vocab: Arc<Vocabulary>,
    succ: Vec<Vec<(u32, u32)>>,
    pred: Vec<Vec<(u32, u32)>>,
    denom: Vec<f64>,
    outcomes: f64,
    constant: f64,
    left_sum: Vec<f64>,
    right_sum: Vec<f64>,
    unk: u32,
    bos: u32,
    eos: u32,
}

fn lookup(list: &[(u32, u32)], key: u32) -> u32 {
    match list.binary_search_by_key(&key, |&(k, _)| k) {
        Ok(pos) => list[pos].1,
        Err(_) => 0,
    }
}

impl NgramModel {
    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn symbol(&self, word: &str) -> u32 {
        self.vocab.id_of(word).unwrap_or(self.unk)
    }

    fn neighbors_of(&self, words: &[String], index: usize) -> (u32, u32) {
        let left = if index == 0 { self.bos } else { self.symbol(&words[index - 1]) };
        let right = if index + 1 >= words.len() {
            self.eos
        } else {
            self.symbol(&words[index + 1])
        };
        (left, right)
    }

    fn bigram(&self, a: u32, b: u32) -> u32 {
        lookup(&self.succ[a as usize], b)
    }

    /// `ln Z(l, r)` where `Z` sums the unnormalized weights over the
    /// vocabulary (the common `1/(c(l)+S)` factor dropped).
    fn log_normalizer(&self, left: u32, right: u32) -> f64 {
        let v = self.vocab.len() as u32;
        let succ = &self.succ[left as usize];
        let pred = &self.pred[right as usize];
        let mut both = 0.0;
        if succ.len() <= pred.len() {
            for &(w, c) in succ.iter().filter(|&&(w, _)| w < v) {
                let c2 = lookup(pred, w);
                if c2 > 0 {
                    both += (c as f64) * (c2 as f64) / self.denom[w as usize];
                }
            }
        } else {
            for &(w, c2) in pred.iter().filter(|&&(w, _)| w < v) {
                let c = lookup(succ, w);
                if c > 0 {
                    both += (c as f64) * (c2 as f64) / self.denom[w as usize];
                }
            }
        }
        (self.constant + self.left_sum[left as usize] + self.right_sum[right as usize] + both).ln()
    }

    /// Unnormalized log weight of `word` between `left` and `right`.
    fn log_weight(&self, left: u32, word: &str, right: u32) -> f64 {
        match self.vocab.id_of(word) {
            Some(w) => {
                let a = self.bigram(left, w) as f64 + 1.0;
                let b = self.bigram(w, right) as f64 + 1.0;
                a.ln() + b.ln() - self.denom[w as usize].ln()
            }
            // Unseen word: zero counts on both sides.
            None => -self.outcomes.ln(),
        }
    }

    /// `log p(word | left, right)` given explicit neighbor words.
    fn position_log_prob(&self, words: &[String], index: usize, word: &str) -> f64 {
        let (l, r) = self.neighbors_of(words, index);
        self.log_weight(l, word, r) - self.log_normalizer(l, r)
    }

    /// Per-position ground-truth probabilities of a sequence.
    pub fn position_probabilities(&self, words: &[String]) -> PositionProbabilities {
        PositionProbabilities {
            per_position: (0..words.len())
                .map(|j| self.position_log_prob(words, j, &words[j]).exp())
                .collect(),
        }
    }

    fn position_log_sum(&self, words: &[String], positions: impl Iterator<Item = usize>) -> f64 {
        positions.map(|j| self.position_log_prob(words, j, &words[j])).sum()
    }
}

impl Provider for NgramModel {
    fn name(&self) -> String {
        format!("ngram(bigram,add-one,V={})", self.vocab.len())
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            conditional: true,
            pseudo_likelihood: true,
            replaced: false,
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
        let (l, r) = self.neighbors_of(&query.context.words, query.masked_index);
        let log_z = self.log_normalizer(l, r);
        let entries: Vec<(WordId, f64)> = self
            .vocab
            .words()
            .iter()
            .enumerate()
            .map(|(id, w)| (id as WordId, self.log_weight(l, w, r) - log_z))
            .collect();
        Ok(ConditionalDistribution::from_log_probs(entries, top_n))
    }

    fn log_prob(&self, query: &ConditionalQuery<'_>, word: &str) -> Result<f64, ProviderError> {
        query.validate()?;
        Ok(self.position_log_prob(&query.context.words, query.masked_index, word))
    }

    fn pseudo_likelihood(&self, context: &Context, variant: Option<(usize, &str)>) -> Result<f64, ProviderError> {
        match variant {
            None => Ok(self.position_log_sum(&context.words, 0..context.len())),
            Some((index, word)) => {
                if index >= context.len() {
                    return Err(ProviderError::QueryRange {
                        index,
                        len: context.len(),
                    });
                }
                let mut words = context.words.clone();
                words[index] = word.to_string();
                Ok(self.position_log_sum(&words, 0..words.len()))
            }
        }
    }

    /// Only positions `index-1..=index+1` see the substitution, so the ratio
    /// is computed over that window.
    fn pseudo_likelihood_ratio(&self, context: &Context, index: usize, replacement: &str) -> Result<f64, ProviderError> {
        if index >= context.len() {
            return Err(ProviderError::QueryRange {
                index,
                len: context.len(),
            });
        }
        if context.words[index] == replacement {
            return Ok(0.0);
        }
        let lo = index.saturating_sub(1);
        let hi = (index + 2).min(context.len());
        let mut window: Vec<String> = Vec::with_capacity(hi - lo + 2);
        // Keep one word of context on each side so window edges see the same
        // neighbors as in the full sequence.
        let start = lo.saturating_sub(1);
        let end = (hi + 1).min(context.len());
        window.extend_from_slice(&context.words[start..end]);
        let offset = lo - start;
        let positions = || offset..offset + (hi - lo);
        let original = self.window_log_sum(&window, positions(), start == 0, end == context.len());
        window[index - start] = replacement.to_string();
        let variant = self.window_log_sum(&window, positions(), start == 0, end == context.len());
        Ok(variant - original)
    }
}

impl NgramModel {
    /// Log-sum over `positions` of a window cut from a longer sequence. Edges
    /// that are not true sequence boundaries use the window's own words as
    /// neighbors, which callers guarantee by padding one word on each side.
    fn window_log_sum(
        &self,
        window: &[String],
        positions: std::ops::Range<usize>,
        starts_sequence: bool,
        ends_sequence: bool,
    ) -> f64 {
        positions
            .map(|j| {
                let left = if j == 0 {
                    debug_assert!(starts_sequence);
                    self.bos
                } else {
                    self.symbol(&window[j - 1])
                };
                let right = if j + 1 >= window.len() {
                    debug_assert!(ends_sequence);
                    self.eos
                } else {
                    self.symbol(&window[j + 1])
                };
                self.log_weight(left, &window[j], right) - self.log_normalizer(left, right)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn train(corpus: &[&str]) -> NgramModel {
        let mut t = NgramTrainer::new();
        for s in corpus {
            t.add_sequence(&words(s));
        }
        t.build().unwrap()
    }

    #[test]
    fn alternating_corpus_predicts_y_between_x() {
        let model = train(&["x y x y x y"]);
        let ctx = Context::new("d", words("x q x"));
        let dist = model.conditional(&ConditionalQuery::new(&ctx, 1), None).unwrap();
        assert_eq!(model.vocab().word(dist.support[0].0), "y");
        // Hand computation, V=2, S=4, counts: <s>x 1, xy 3, yx 2, y</s> 1.
        // weight(y) = (3+1)(2+1)/(c(y)+S) = 12/7, weight(x) = 1*1/(c(x)+S) = 1/7.
        let p_y = dist.support[0].1.exp();
        assert!((p_y - 12.0 / 13.0).abs() < 1e-12, "{p_y}");
    }

    #[test]
    fn distributions_sum_to_one() {
        let model = train(&["the cat sat on the mat", "the dog sat on a log", "a cat and a dog"]);
        let ctx = Context::new("d", words("the cat sat on unseen mat"));
        for i in 0..ctx.len() {
            let dist = model.conditional(&ConditionalQuery::new(&ctx, i), None).unwrap();
            let total: f64 = dist.support.iter().map(|(_, lp)| lp.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "position {i}: {total}");
            assert!(!dist.truncated);
            for (id, lp) in &dist.support {
                let direct = model.log_prob(&ConditionalQuery::new(&ctx, i), model.vocab().word(*id)).unwrap();
                assert!((direct - lp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_ratio_matches_full_recomputation() {
        let model = train(&["the cat sat on the mat", "the dog sat on a log", "a cat and a dog"]);
        let ctx = Context::new("d", words("a dog sat on the log and the cat"));
        for i in 0..ctx.len() {
            for w in model.vocab().words() {
                let fast = model.pseudo_likelihood_ratio(&ctx, i, w).unwrap();
                let slow = model.pseudo_likelihood(&ctx, Some((i, w))).unwrap()
                    - model.pseudo_likelihood(&ctx, None).unwrap();
                assert!((fast - slow).abs() < 1e-9, "{i} {w}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn identity_variant_scores_like_original() {
        let model = train(&["the cat sat on the mat"]);
        let ctx = Context::new("d", words("the cat sat"));
        let orig = model.pseudo_likelihood(&ctx, None).unwrap();
        let same = model.pseudo_likelihood(&ctx, Some((1, "cat"))).unwrap();
        assert_eq!(orig, same);
        let pp = model.position_probabilities(&ctx.words);
        assert!((pp.log_pseudo_likelihood() - orig).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_builds() {
        let a = train(&["b a c a b", "c c a"]);
        let b = train(&["b a c a b", "c c a"]);
        let ctx = Context::new("d", words("a b c"));
        let qa = a.conditional(&ConditionalQuery::new(&ctx, 1), None).unwrap();
        let qb = b.conditional(&ConditionalQuery::new(&ctx, 1), None).unwrap();
        assert_eq!(qa, qb);
    }

    #[test]
    fn fixed_vocabulary_maps_unknowns() {
        let vocab = Arc::new(Vocabulary::from_words(["a", "b"], NormalizationPolicy::Compose).unwrap());
        let mut t = NgramTrainer::with_vocabulary(vocab);
        t.add_sequence(&words("a zz b a"));
        let model = t.build().unwrap();
        assert_eq!(model.vocab().len(), 2);
        let ctx = Context::new("d", words("a zz b"));
        let dist = model.conditional(&ConditionalQuery::new(&ctx, 1), None).unwrap();
        let total: f64 = dist.support.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
