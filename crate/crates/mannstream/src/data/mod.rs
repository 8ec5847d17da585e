//! Dataset ingestion and generation.
//!
//! Two sources: plain-text QA corpora in the bAbI line format
//! ([`parse_babi`]) and deterministic synthetic planted tasks with
//! analytically constructed weights ([`synthesize_planted`]). Both produce
//! the same in-memory shape, and both round-trip through a binary cache.

mod babi;
mod cache;
mod planted;

use std::collections::HashMap;
use std::io;

use thiserror::Error;

use crate::model::{ModelError, Sentence};

pub use babi::{parse_babi, tokenize_line, ParsedCorpus, RawSample};
pub use cache::{load_dataset, save_dataset, CACHE_FORMAT_VERSION, CACHE_MAGIC};
pub use planted::{synthesize_planted, PlantedTask, ADDRESS_SCALE};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: missing or malformed line id")]
    BadLineId { line: usize },
    #[error("line {line}: question line needs tab-separated question and answer")]
    MalformedQuestion { line: usize },
    #[error("line {line}: empty answer field")]
    EmptyAnswer { line: usize },
    #[error("line {line}: malformed supporting fact ids")]
    BadSupportingIds { line: usize },
    #[error("unknown token {token:?}")]
    UnknownToken { token: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bad cache magic: expected \"MNDS\"")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("cache truncated or corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One question-answering example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QASample {
    /// Statement sentences, in arrival order.
    pub story: Vec<Sentence>,
    pub question: Sentence,
    /// Answer label, dense in `[0, I)`.
    pub answer: usize,
    /// 1-based statement line ids backing the answer, when known.
    pub supporting_fact_ids: Option<Vec<usize>>,
}

/// Token/index bijection plus the answer-token-to-label map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    answer_to_label: HashMap<String, usize>,
    label_to_answer: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct tokens (the model's `V`).
    pub fn vocab_size(&self) -> usize {
        self.index_to_token.len()
    }

    /// Number of distinct answer tokens (the model's `I`).
    pub fn answer_count(&self) -> usize {
        self.label_to_answer.len()
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn answer_label(&self, token: &str) -> Option<usize> {
        self.answer_to_label.get(token).copied()
    }

    pub fn answer_token(&self, label: usize) -> Option<&str> {
        self.label_to_answer.get(label).map(String::as_str)
    }

    /// Interns a token, returning its (possibly new) dense index.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.token_to_index.get(token) {
            return i;
        }
        let i = self.index_to_token.len();
        self.token_to_index.insert(token.to_string(), i);
        self.index_to_token.push(token.to_string());
        i
    }

    /// Interns an answer token, returning its (possibly new) dense label.
    pub fn intern_answer(&mut self, token: &str) -> usize {
        if let Some(&l) = self.answer_to_label.get(token) {
            return l;
        }
        let l = self.label_to_answer.len();
        self.answer_to_label.insert(token.to_string(), l);
        self.label_to_answer.push(token.to_string());
        l
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn answer_tokens(&self) -> &[String] {
        &self.label_to_answer
    }
}

/// Encodes a tokenized sample against a fixed vocabulary.
///
/// Every token (including the answer) must already be interned; unknown
/// tokens are an error naming the offender.
pub fn encode_sample(raw: &RawSample, vocab: &Vocabulary) -> Result<QASample, DataError> {
    let encode_tokens = |tokens: &[String]| -> Result<Sentence, DataError> {
        let mut indices = Vec::with_capacity(tokens.len());
        for t in tokens {
            let idx = vocab.token_index(t).ok_or_else(|| DataError::UnknownToken {
                token: t.clone(),
            })?;
            indices.push(idx);
        }
        Ok(Sentence::new(indices)?)
    };
    let story = raw
        .story
        .iter()
        .map(|s| encode_tokens(s))
        .collect::<Result<Vec<_>, _>>()?;
    let question = encode_tokens(&raw.question)?;
    let answer = vocab
        .answer_label(&raw.answer)
        .ok_or_else(|| DataError::UnknownToken {
            token: raw.answer.clone(),
        })?;
    Ok(QASample {
        story,
        question,
        answer,
        supporting_fact_ids: raw.supporting.clone(),
    })
}

/// Maps a sentence back to its tokens. Inverse of encoding as long as the
/// indices are in range.
pub fn decode_sentence(sentence: &Sentence, vocab: &Vocabulary) -> Vec<String> {
    sentence
        .words()
        .iter()
        .map(|&i| vocab.token(i).unwrap_or("<oov>").to_string())
        .collect()
}

/// Longest story in the dataset; the minimum viable memory capacity.
pub fn max_story_len(samples: &[QASample]) -> usize {
    samples.iter().map(|s| s.story.len()).max().unwrap_or(0)
}
