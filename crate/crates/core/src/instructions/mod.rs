//! Tokenized instructions, the vocabulary, the templated speaker that
//! renders expert paths into text with controlled lexical variation, and the
//! n-gram overlap analyzer.

mod grammar;
mod ngram;

pub use grammar::{Grammar, GrammarConfig, RenderError};
pub use ngram::{ngram_overlap, NgramError};

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const SEQ_START: u32 = 3;
pub const SEQ_END: u32 = 4;

const RESERVED: [&str; 5] = ["<pad>", "<unk>", "<mask>", "<s>", "</s>"];

pub const DEFAULT_MAX_LEN: usize = 60;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary file {path} is corrupt: {reason}")]
    Corrupt { path: String, reason: String },
}

/// One tokenized instruction. Keeps both the ids and the raw text; ids are
/// relative to the vocabulary the sequence was tokenized with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<u32>,
    pub raw_text: String,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Words of the raw text under the same normalization the tokenizer
    /// applies; this is what the n-gram analyzer counts, so unseen words
    /// are not collapsed into the unknown id.
    pub fn words(&self) -> Vec<String> {
        split_words(&self.raw_text)
    }
}

/// Token <-> id bijection with the five reserved ids at indices 0-4.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: std::sync::OnceLock<HashMap<String, u32>>,
}

impl Vocabulary {
    /// Build from a training corpus: reserved tokens first, then the
    /// distinct words in sorted order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = texts
            .into_iter()
            .flat_map(|t| split_words(t))
            .collect();
        words.sort();
        words.dedup();
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        Vocabulary { tokens, index: std::sync::OnceLock::new() }
    }

    fn index(&self) -> &HashMap<String, u32> {
        self.index.get_or_init(|| {
            self.tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect()
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index().get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index().contains_key(token)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        let io_err = |source| VocabError::Io { path: path.display().to_string(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(io_err)?;
        }
        f.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let io_err = |source| VocabError::Io { path: path.display().to_string(), source };
        let f = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let tokens: Vec<String> = f.lines().collect::<Result<_, _>>().map_err(io_err)?;
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(|s| s.as_str()) != Some(*r) {
                return Err(VocabError::Corrupt {
                    path: path.display().to_string(),
                    reason: format!("reserved token {r} missing at index {i}"),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(t) {
                return Err(VocabError::Corrupt {
                    path: path.display().to_string(),
                    reason: format!("duplicate token {t}"),
                });
            }
        }
        Ok(Vocabulary { tokens, index: std::sync::OnceLock::new() })
    }
}

/// Lowercase and split into alphanumeric runs; punctuation separates words.
pub fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Tokenize text against a vocabulary. Out-of-vocabulary words map to the
/// unknown id (unseen lexemes are the point, not an error). Non-empty text
/// is framed with the start/end markers; empty text degenerates to a single
/// end marker. Words beyond `max_len - 2` are dropped.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    let words = split_words(text);
    let mut tokens = Vec::with_capacity(words.len().min(max_len) + 2);
    if !words.is_empty() {
        tokens.push(SEQ_START);
        for w in words.iter().take(max_len.saturating_sub(2)) {
            tokens.push(vocab.id_of(w).unwrap_or(UNK));
        }
    }
    tokens.push(SEQ_END);
    TokenSeq { tokens, raw_text: text.to_string() }
}

/// Recover the in-vocabulary words of a token sequence.
pub fn detokenize(seq: &TokenSeq, vocab: &Vocabulary) -> String {
    seq.tokens
        .iter()
        .filter(|&&t| t > SEQ_END)
        .filter_map(|&t| vocab.token_of(t))
        .collect::<Vec<_>>()
        .join(" ")
}
