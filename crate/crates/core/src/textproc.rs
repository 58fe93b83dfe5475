//! Tokenization at the granularity that defines candidate segment boundaries.
//!
//! Word level splits on runs of Unicode whitespace; character level yields one
//! token per Unicode scalar value, skipping whitespace. Text is NFC-normalized
//! before splitting. Punctuation stays attached to words.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizationLevel {
    Word,
    Character,
}

impl TokenizationLevel {
    /// Character level for Chinese and Japanese targets, word level otherwise.
    pub fn for_language(lang: &str) -> Self {
        let base = lang.split(['-', '_']).next().unwrap_or(lang);
        match base.to_ascii_lowercase().as_str() {
            "zh" | "ja" => TokenizationLevel::Character,
            _ => TokenizationLevel::Word,
        }
    }
}

impl std::str::FromStr for TokenizationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenizationLevel::Word),
            "char" | "character" => Ok(TokenizationLevel::Character),
            other => Err(Error::invalid(format!("unknown tokenization level {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    tokens: Vec<String>,
    level: TokenizationLevel,
}

impl TokenStream {
    /// Builds a stream from pre-split tokens, rejecting empty tokens, tokens
    /// containing whitespace, and (at character level) multi-scalar tokens.
    pub fn new(tokens: Vec<String>, level: TokenizationLevel) -> Result<Self> {
        for tok in &tokens {
            let bad = tok.is_empty()
                || tok.chars().any(char::is_whitespace)
                || (level == TokenizationLevel::Character && tok.chars().count() != 1);
            if bad {
                return Err(Error::InvalidToken(tok.clone()));
            }
        }
        Ok(TokenStream { tokens, level })
    }

    pub fn empty(level: TokenizationLevel) -> Self {
        TokenStream {
            tokens: Vec::new(),
            level,
        }
    }

    pub fn level(&self) -> TokenizationLevel {
        self.level
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Sub-stream over `range` of token offsets.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TokenStream {
        TokenStream {
            tokens: self.tokens[range].to_vec(),
            level: self.level,
        }
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

pub fn tokenize(text: &str, level: TokenizationLevel) -> TokenStream {
    let normalized: String = text.nfc().collect();
    let tokens = match level {
        TokenizationLevel::Word => normalized.split_whitespace().map(str::to_owned).collect(),
        TokenizationLevel::Character => normalized
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    };
    TokenStream { tokens, level }
}

pub fn join_tokens(stream: &TokenStream) -> String {
    match stream.level {
        TokenizationLevel::Word => stream.tokens.join(" "),
        TokenizationLevel::Character => stream.tokens.concat(),
    }
}

/// Result of [`concat_streams`]: the joined stream plus the start offset of
/// each input stream within it (one entry per input, then the total length).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Concatenated {
    pub stream: TokenStream,
    pub offsets: Vec<usize>,
}

pub fn concat_streams(streams: &[TokenStream]) -> Result<Concatenated> {
    let level = streams
        .first()
        .map(|s| s.level)
        .unwrap_or(TokenizationLevel::Word);
    let mut tokens = Vec::with_capacity(streams.iter().map(TokenStream::len).sum());
    let mut offsets = Vec::with_capacity(streams.len() + 1);
    for s in streams {
        if s.level != level {
            return Err(Error::LevelMismatch(level, s.level));
        }
        offsets.push(tokens.len());
        tokens.extend(s.tokens.iter().cloned());
    }
    offsets.push(tokens.len());
    Ok(Concatenated {
        stream: TokenStream { tokens, level },
        offsets,
    })
}
