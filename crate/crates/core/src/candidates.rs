//! Vocabulary and exact Levenshtein-neighborhood enumeration.
//!
//! The index is a character trie walked with one edit-distance DP row per
//! trie depth. Subtrees whose row minimum exceeds the radius are pruned, so
//! a query touches only the prefixes that can still lead to a match.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{CandidateError, TextError};
use crate::text::NormalizationPolicy;

pub type WordId = u32;

/// Default largest radius an index answers.
pub const DEFAULT_MAX_RADIUS: usize = 3;

/// A fixed set of normalized words with dense ids in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, WordId>,
}

impl Vocabulary {
    /// Builds a vocabulary, normalizing each entry under `policy`. Entries
    /// that collide after normalization are reported together.
    pub fn from_words<I, S>(words: I, policy: NormalizationPolicy) -> Result<Self, CandidateError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vocabulary::default();
        let mut originals: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for raw in words {
            let raw = raw.as_ref();
            let word = policy.apply(raw.trim());
            originals.entry(word.clone()).or_default().push(raw.to_string());
            if !out.ids.contains_key(&word) {
                out.ids.insert(word.clone(), out.words.len() as WordId);
                out.words.push(word);
            }
        }
        let collisions: Vec<(String, Vec<String>)> =
            originals.into_iter().filter(|(_, o)| o.len() > 1).collect();
        if !collisions.is_empty() {
            return Err(CandidateError::DuplicateWords(collisions));
        }
        Ok(out)
    }

    /// Reads a vocabulary file: one word per line, `#` comments and blank
    /// lines ignored.
    pub fn load(path: &Path, policy: NormalizationPolicy) -> Result<Self, CandidateError> {
        let bytes = std::fs::read(path).map_err(|source| CandidateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = std::str::from_utf8(&bytes).map_err(|e| CandidateError::Text {
            path: path.to_path_buf(),
            source: TextError::Decode {
                offset: e.valid_up_to(),
            },
        })?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::from_words(words, policy)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn id_of(&self, word: &str) -> Option<WordId> {
        self.ids.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Hex SHA-256 over the words in id order, each terminated by `\n`.
    /// Exported logits files carry this to prove they share the vocabulary.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// One word per line, in id order.
    pub fn to_file_contents(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    pub distance: usize,
    pub id: WordId,
}

/// The vocabulary words within `radius` edits of `center`, sorted by
/// (distance, word id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub center: String,
    pub radius: usize,
    pub members: Vec<Candidate>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> + '_ {
        self.members.iter().map(|c| c.id)
    }

    pub fn contains(&self, id: WordId) -> bool {
        self.members.iter().any(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IndexOptions {
    pub max_radius: usize,
    /// Accept an empty vocabulary instead of failing the build.
    pub allow_empty: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            max_radius: DEFAULT_MAX_RADIUS,
            allow_empty: false,
        }
    }
}

#[derive(Debug, Default)]
struct TrieNode {
    // Sorted by char so traversal order is deterministic.
    children: Vec<(char, u32)>,
    terminal: Option<WordId>,
}

/// Immutable neighborhood index over a vocabulary.
#[derive(Debug)]
pub struct NeighborIndex {
    vocab: Arc<Vocabulary>,
    nodes: Vec<TrieNode>,
    max_radius: usize,
}

impl NeighborIndex {
    pub fn build(vocab: Arc<Vocabulary>, options: IndexOptions) -> Result<Self, CandidateError> {
        if vocab.is_empty() && !options.allow_empty {
            return Err(CandidateError::EmptyVocabulary);
        }
        let mut nodes = vec![TrieNode::default()];
        for (id, word) in vocab.words().iter().enumerate() {
            let mut node = 0usize;
            for c in word.chars() {
                node = match nodes[node].children.binary_search_by_key(&c, |(k, _)| *k) {
                    Ok(pos) => nodes[node].children[pos].1 as usize,
                    Err(pos) => {
                        let next = nodes.len();
                        nodes.push(TrieNode::default());
                        nodes[node].children.insert(pos, (c, next as u32));
                        next
                    }
                };
            }
            nodes[node].terminal = Some(id as WordId);
        }
        Ok(NeighborIndex {
            vocab,
            nodes,
            max_radius: options.max_radius,
        })
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn max_radius(&self) -> usize {
        self.max_radius
    }

    /// Every vocabulary word within `k` edits of `center`.
    pub fn neighbors(&self, center: &str, k: usize) -> Result<CandidateSet, CandidateError> {
        if k > self.max_radius {
            return Err(CandidateError::UnsupportedRadius {
                requested: k,
                max: self.max_radius,
            });
        }
        let query: Vec<char> = center.chars().collect();
        let mut members = Vec::new();
        let first_row: Vec<usize> = (0..=query.len()).collect();
        self.walk(0, &query, &first_row, k, &mut members);
        members.sort_unstable();
        Ok(CandidateSet {
            center: center.to_string(),
            radius: k,
            members,
        })
    }

    fn walk(&self, node: usize, query: &[char], row: &[usize], k: usize, out: &mut Vec<Candidate>) {
        let n = &self.nodes[node];
        if let Some(id) = n.terminal {
            let d = row[query.len()];
            if d <= k {
                out.push(Candidate { distance: d, id });
            }
        }
        let mut next = vec![0usize; row.len()];
        for &(c, child) in &n.children {
            next[0] = row[0] + 1;
            let mut row_min = next[0];
            for j in 1..row.len() {
                let sub = row[j - 1] + usize::from(query[j - 1] != c);
                next[j] = sub.min(row[j] + 1).min(next[j - 1] + 1);
                row_min = row_min.min(next[j]);
            }
            if row_min <= k {
                self.walk(child as usize, query, &next, k, out);
            }
        }
    }
}

/// Convenience: build with default options.
pub fn build_index(vocab: Arc<Vocabulary>) -> Result<NeighborIndex, CandidateError> {
    NeighborIndex::build(vocab, IndexOptions::default())
}
