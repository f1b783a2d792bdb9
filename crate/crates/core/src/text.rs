//! Text primitives: Unicode normalization, word segmentation, token
//! decomposition and codepoint-level edit distance.
//!
//! Every downstream component works on [`NormalizedText`]; two texts are
//! only comparable when they were normalized under the same
//! [`NormalizationPolicy`].

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::TextError;

/// How raw text is brought into canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationPolicy {
    /// NFC composition. Diacritic-bearing letters stay distinct characters.
    #[default]
    Compose,
    /// NFD decomposition with combining marks removed, for
    /// diacritic-insensitive experiments.
    #[serde(rename = "decompose-strip-off")]
    DecomposeStripMarks,
}

impl NormalizationPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizationPolicy::Compose => "compose",
            NormalizationPolicy::DecomposeStripMarks => "decompose-strip-off",
        }
    }

    /// Normalizes a single word or fragment without touching whitespace.
    pub fn apply(&self, s: &str) -> String {
        match self {
            NormalizationPolicy::Compose => s.nfc().collect(),
            NormalizationPolicy::DecomposeStripMarks => {
                s.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
            }
        }
    }
}

impl fmt::Display for NormalizationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationPolicy {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "compose" => Ok(NormalizationPolicy::Compose),
            "decompose-strip-off" => Ok(NormalizationPolicy::DecomposeStripMarks),
            other => Err(TextError::UnknownPolicy(other.to_string())),
        }
    }
}

/// A text together with its canonical form and the policy that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    raw: String,
    normalized: String,
    policy: NormalizationPolicy,
}

impl NormalizedText {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn as_str(&self) -> &str {
        &self.normalized
    }

    pub fn policy(&self) -> NormalizationPolicy {
        self.policy
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

/// Normalizes `raw` under `policy`: canonical composition (or mark
/// stripping) followed by collapsing whitespace runs to a single space.
/// Leading and trailing whitespace is dropped.
pub fn normalize(raw: &str, policy: NormalizationPolicy) -> NormalizedText {
    let canonical = policy.apply(raw);
    let mut normalized = String::with_capacity(canonical.len());
    for piece in canonical.split_whitespace() {
        if !normalized.is_empty() {
            normalized.push(' ');
        }
        normalized.push_str(piece);
    }
    NormalizedText {
        raw: raw.to_string(),
        normalized,
        policy,
    }
}

/// Like [`normalize`], but starting from bytes that must be valid UTF-8.
pub fn normalize_bytes(raw: &[u8], policy: NormalizationPolicy) -> Result<NormalizedText, TextError> {
    let s = std::str::from_utf8(raw).map_err(|e| TextError::Decode {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize(s, policy))
}

/// Splits a word into the tokens `t_1..t_n` that detectors reason about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenization {
    /// The whole word is a single token.
    #[default]
    Word,
    /// One token per codepoint.
    Char,
}

impl Tokenization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tokenization::Word => "word",
            Tokenization::Char => "char",
        }
    }

    pub fn tokenize(&self, surface: &str) -> Vec<String> {
        match self {
            Tokenization::Word => vec![surface.to_string()],
            Tokenization::Char => surface.chars().map(String::from).collect(),
        }
    }

    /// Inverse of [`Tokenization::tokenize`]; plain concatenation for every
    /// scheme.
    pub fn detokenize(&self, tokens: &[String]) -> String {
        tokens.concat()
    }
}

impl FromStr for Tokenization {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(Tokenization::Word),
            "char" => Ok(Tokenization::Char),
            other => Err(TextError::UnknownTokenization(other.to_string())),
        }
    }
}

/// One word (or standalone punctuation mark) of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub doc_id: String,
    /// 0-based ordinal; dense per document.
    pub word_index: usize,
    /// Codepoint offsets into the normalized text, half-open.
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
    pub tokens: Vec<String>,
    /// Punctuation spans are indexed but never scored.
    pub punctuation: bool,
}

impl WordSpan {
    pub fn is_lexical(&self) -> bool {
        !self.punctuation
    }
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}|[^\s\p{P}]+").expect("valid segmentation regex"))
}

/// Whether `c` forms a standalone punctuation span.
pub fn is_punctuation(c: char) -> bool {
    is_punct_class(c)
}

fn is_punct_class(c: char) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\p{P}$").expect("valid punctuation regex"));
    let mut buf = [0u8; 4];
    re.is_match(c.encode_utf8(&mut buf))
}

/// Segments normalized text into whitespace- and punctuation-delimited
/// spans. Each punctuation codepoint is its own span.
pub fn segment_words(doc_id: &str, text: &NormalizedText, scheme: Tokenization) -> Vec<WordSpan> {
    let s = text.as_str();
    let mut spans = Vec::new();
    // Running byte -> char offset conversion; matches arrive in order.
    let mut byte_pos = 0usize;
    let mut char_pos = 0usize;
    for m in word_regex().find_iter(s) {
        char_pos += s[byte_pos..m.start()].chars().count();
        let len = m.as_str().chars().count();
        let surface = m.as_str().to_string();
        let punctuation = len == 1 && is_punct_class(surface.chars().next().unwrap_or(' '));
        spans.push(WordSpan {
            doc_id: doc_id.to_string(),
            word_index: spans.len(),
            char_start: char_pos,
            char_end: char_pos + len,
            tokens: scheme.tokenize(&surface),
            surface,
            punctuation,
        });
        char_pos += len;
        byte_pos = m.end();
    }
    spans
}

/// A normalized document with its segmentation.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub text: NormalizedText,
    pub spans: Vec<WordSpan>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw: &str, policy: NormalizationPolicy, scheme: Tokenization) -> Self {
        let id = id.into();
        let text = normalize(raw, policy);
        let spans = segment_words(&id, &text, scheme);
        Document { id, text, spans }
    }

    pub fn words(&self) -> Vec<String> {
        self.spans.iter().map(|s| s.surface.clone()).collect()
    }

    pub fn lexical_spans(&self) -> impl Iterator<Item = &WordSpan> {
        self.spans.iter().filter(|s| s.is_lexical())
    }

    /// Rebuilds the normalized text with some spans replaced, keeping all
    /// inter-span material intact.
    pub fn with_replacements(&self, replacements: &[(usize, String)]) -> String {
        let chars: Vec<char> = self.text.as_str().chars().collect();
        let mut sorted: Vec<&(usize, String)> = replacements.iter().collect();
        sorted.sort_by_key(|(i, _)| *i);
        let mut out = String::with_capacity(self.text.as_str().len());
        let mut cursor = 0usize;
        for (index, replacement) in sorted {
            let span = &self.spans[*index];
            out.extend(&chars[cursor..span.char_start]);
            out.push_str(replacement);
            cursor = span.char_end;
        }
        out.extend(&chars[cursor..]);
        out
    }
}

/// Unit-cost edit distance counted in canonically composed codepoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EditDistance(pub usize);

impl EditDistance {
    pub fn value(self) -> usize {
        self.0
    }
}

/// Levenshtein distance over codepoints with unit insert, delete and
/// substitute costs.
pub fn levenshtein(a: &str, b: &str) -> EditDistance {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return EditDistance(b.len());
    }
    if b.is_empty() {
        return EditDistance(a.len());
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    EditDistance(prev[b.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE_TEXT: &str = "τὸ γὰρ ἐπίρρημα τοῦ ’ ἐκεῖ ‘ τοῦτό μοι ἐμφαίνειν δοκεῖ , ὅτι καὶ τὴν κατὰ μῆκος κινούμενος κίνησιν , ἣν ἀνωτέρω ὁ λόγος ἐδήλωσεν , οὐδὲ τὸ πρὸς νότον κατιέναι καὶ αὖθις ἐκεῖθεν πρὸς βορρᾶν ἀνιέναι ἐστέρηται , ἀλλὰ κἀκεῖσε πορεύεται κἀνταῦθα κεκίνηται .";

    #[test]
    fn composed_and_decomposed_spellings_agree() {
        let precomposed = "τ\u{1F78}";
        let decomposed = "τ\u{03BF}\u{0300}";
        let a = normalize(precomposed, NormalizationPolicy::Compose);
        let b = normalize(decomposed, NormalizationPolicy::Compose);
        assert_eq!(a.as_str(), "τὸ");
        assert_eq!(a.as_str(), b.as_str());
    }

    #[test]
    fn whitespace_runs_collapse() {
        assert_eq!(normalize("a  b", NormalizationPolicy::Compose).as_str(), "a b");
        assert_eq!(normalize("  a \t\n b  ", NormalizationPolicy::Compose).as_str(), "a b");
    }

    #[test]
    fn strip_policy_removes_diacritics() {
        let t = normalize("τὸ τοῦ", NormalizationPolicy::DecomposeStripMarks);
        assert_eq!(t.as_str(), "το του");
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let bytes = b"abc\xffdef";
        match normalize_bytes(bytes, NormalizationPolicy::Compose) {
            Err(TextError::Decode { offset }) => assert_eq!(offset, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sample_passage_word_index() {
        let text = normalize(SAMPLE_TEXT, NormalizationPolicy::Compose);
        let spans = segment_words("opusc-107", &text, Tokenization::Word);
        assert_eq!(spans[27].surface, "τὸ");
        assert_eq!(spans[28].surface, "πρὸς");
        assert!(spans[25].punctuation);
        assert!(spans[4].punctuation, "’ is its own span");
    }

    #[test]
    fn empty_text_has_no_spans() {
        let text = normalize("", NormalizationPolicy::Compose);
        assert!(segment_words("d", &text, Tokenization::Word).is_empty());
    }

    #[test]
    fn repeated_words_get_dense_indices() {
        let text = normalize("x y x", NormalizationPolicy::Compose);
        let spans = segment_words("d", &text, Tokenization::Word);
        let got: Vec<(usize, usize, usize, &str)> = spans
            .iter()
            .map(|s| (s.word_index, s.char_start, s.char_end, s.surface.as_str()))
            .collect();
        assert_eq!(got, vec![(0, 0, 1, "x"), (1, 2, 3, "y"), (2, 4, 5, "x")]);
    }

    #[test]
    fn attached_punctuation_splits() {
        let text = normalize("whale, and—sea.", NormalizationPolicy::Compose);
        let spans = segment_words("d", &text, Tokenization::Word);
        let surfaces: Vec<&str> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["whale", ",", "and", "—", "sea", "."]);
        assert_eq!(spans.iter().filter(|s| s.punctuation).count(), 3);
    }

    #[test]
    fn elision_mark_stays_in_word() {
        let text = normalize("καθ´ ἡμᾶς", NormalizationPolicy::Compose);
        let spans = segment_words("d", &text, Tokenization::Word);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].surface, "καθ´");
    }

    #[test]
    fn char_tokens_detokenize_to_surface() {
        let text = normalize("ἐκεῖ", NormalizationPolicy::Compose);
        let spans = segment_words("d", &text, Tokenization::Char);
        assert_eq!(spans[0].tokens.len(), 4);
        assert_eq!(Tokenization::Char.detokenize(&spans[0].tokens), spans[0].surface);
    }

    #[test]
    fn levenshtein_fixtures() {
        assert_eq!(levenshtein("σαφες", "σαφης").value(), 1);
        assert_eq!(levenshtein("abc", "abc").value(), 0);
        assert_eq!(levenshtein("", "abc").value(), 3);
        assert_eq!(levenshtein("cat", "cart").value(), 1);
        assert_eq!(levenshtein("ο", "ὸ").value(), 1);
        assert_eq!(levenshtein("τὸ", "τοῦ").value(), 2);
    }

    #[test]
    fn replacements_keep_layout() {
        let doc = Document::new("d", "the cat, sat", NormalizationPolicy::Compose, Tokenization::Word);
        assert_eq!(doc.with_replacements(&[(1, "cot".into())]), "the cot, sat");
        assert_eq!(doc.with_replacements(&[]), "the cat, sat");
    }

    fn greek_string() -> impl Strategy<Value = String> {
        let alphabet: Vec<char> = "αβγδεοτυῦὸὲάἐἀ ,·\u{0300}\u{0301}\u{0313}\u{0342}\u{0345}\t\n".chars().collect();
        proptest::collection::vec(proptest::sample::select(alphabet), 0..24)
            .prop_map(|cs| cs.into_iter().collect())
    }

    fn short_word() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(vec!['a', 'b', 'c', 'ὸ', 'ο']), 0..7)
            .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn normalization_is_idempotent(s in greek_string()) {
            for policy in [NormalizationPolicy::Compose, NormalizationPolicy::DecomposeStripMarks] {
                let once = normalize(&s, policy);
                let twice = normalize(once.as_str(), policy);
                prop_assert_eq!(once.as_str(), twice.as_str());
            }
        }

        #[test]
        fn segmentation_round_trips(s in greek_string()) {
            let text = normalize(&s, NormalizationPolicy::Compose);
            let spans = segment_words("d", &text, Tokenization::Word);
            let chars: Vec<char> = text.as_str().chars().collect();
            for (i, span) in spans.iter().enumerate() {
                prop_assert_eq!(span.word_index, i);
                prop_assert!(span.char_start < span.char_end);
                let sub: String = chars[span.char_start..span.char_end].iter().collect();
                prop_assert_eq!(&sub, &span.surface);
            }
            // Re-inserting spaces only where the text had them reproduces it.
            let mut rebuilt = String::new();
            let mut last_end = 0;
            for span in &spans {
                if span.char_start > last_end {
                    rebuilt.push(' ');
                }
                rebuilt.push_str(&span.surface);
                last_end = span.char_end;
            }
            prop_assert_eq!(rebuilt, text.as_str());
        }

        #[test]
        fn levenshtein_is_a_metric(a in short_word(), b in short_word(), c in short_word()) {
            let ab = levenshtein(&a, &b).value();
            prop_assert_eq!(ab, levenshtein(&b, &a).value());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(levenshtein(&a, &c).value() <= ab + levenshtein(&b, &c).value());
        }
    }
}
