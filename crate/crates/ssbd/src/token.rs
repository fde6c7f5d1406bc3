//! Token, vocabulary, and sequence primitives.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single token id, valid in the range `[0, vocab.size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Closed token inventory with a distinguished end-of-sequence id and an
/// optional id-to-word table for display and text ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: usize,
    eos_id: TokenId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<String>>,
}

impl Vocab {
    pub fn new(size: usize, eos_id: TokenId) -> Result<Vocab> {
        if size == 0 {
            return Err(Error::Config("vocab size must be positive".into()));
        }
        if eos_id.index() >= size {
            return Err(Error::Config(format!(
                "eos id {eos_id} out of range for vocab of size {size}"
            )));
        }
        Ok(Vocab {
            size,
            eos_id,
            words: None,
        })
    }

    pub fn with_words(words: Vec<String>, eos_id: TokenId) -> Result<Vocab> {
        let mut vocab = Vocab::new(words.len(), eos_id)?;
        vocab.words = Some(words);
        Ok(vocab)
    }

    /// Build a word-level vocab from whitespace-split sentences. Id 0 is the
    /// end-of-sequence marker; remaining ids follow first-seen order.
    pub fn from_corpus<S: AsRef<str>>(sentences: &[S]) -> Result<Vocab> {
        let mut words = vec!["</s>".to_string()];
        for sentence in sentences {
            for word in sentence.as_ref().split_whitespace() {
                if !words.iter().any(|w| w == word) {
                    words.push(word.to_string());
                }
            }
        }
        Vocab::with_words(words, TokenId(0))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn words(&self) -> Option<&[String]> {
        self.words.as_deref()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.size
    }

    pub fn check_token(&self, id: TokenId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::InvalidToken {
                id: id.0,
                vocab_size: self.size,
            })
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eos_id.index() >= self.size {
            return Err(Error::Config(format!(
                "eos id {} out of range for vocab of size {}",
                self.eos_id, self.size
            )));
        }
        if let Some(words) = &self.words {
            if words.len() != self.size {
                return Err(Error::Config(format!(
                    "word table has {} entries for vocab of size {}",
                    words.len(),
                    self.size
                )));
            }
        }
        Ok(())
    }

    /// Whitespace-tokenize `text` against the word table.
    pub fn encode(&self, text: &str) -> Result<TokenSeq> {
        let words = self
            .words
            .as_ref()
            .ok_or_else(|| Error::Config("vocab has no word table".into()))?;
        let mut tokens = Vec::new();
        for word in text.split_whitespace() {
            let id = words
                .iter()
                .position(|w| w == word)
                .ok_or_else(|| Error::Validation(format!("word {word:?} not in vocab")))?;
            tokens.push(TokenId(id as u32));
        }
        Ok(TokenSeq::from(tokens))
    }

    /// Plain id-to-word join; falls back to decimal ids without a word table.
    pub fn decode(&self, seq: &TokenSeq) -> String {
        match &self.words {
            Some(words) => seq
                .iter()
                .map(|t| words[t.index()].as_str())
                .collect::<Vec<_>>()
                .join(" "),
            None => seq
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

/// An ordered token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new() -> TokenSeq {
        TokenSeq(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, i: usize) -> Option<TokenId> {
        self.0.get(i).copied()
    }

    pub fn push(&mut self, id: TokenId) {
        self.0.push(id);
    }

    pub fn truncate(&mut self, len: usize) {
        self.0.truncate(len);
    }

    pub fn extend_from(&mut self, other: &TokenSeq) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn prefix(&self, len: usize) -> TokenSeq {
        TokenSeq(self.0[..len.min(self.0.len())].to_vec())
    }

    /// Checks the sequence against a vocab: ids in range, eos (if any) final
    /// and unique.
    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        for (i, id) in self.0.iter().enumerate() {
            vocab.check_token(*id)?;
            if *id == vocab.eos_id() && i + 1 != self.0.len() {
                return Err(Error::Validation(format!(
                    "eos id at position {i} before the end of the sequence"
                )));
            }
        }
        Ok(())
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(tokens: Vec<TokenId>) -> TokenSeq {
        TokenSeq(tokens)
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(ids: Vec<u32>) -> TokenSeq {
        TokenSeq(ids.into_iter().map(TokenId).collect())
    }
}

impl<const N: usize> From<[u32; N]> for TokenSeq {
    fn from(ids: [u32; N]) -> TokenSeq {
        TokenSeq(ids.iter().map(|&i| TokenId(i)).collect())
    }
}

impl std::ops::Index<usize> for TokenSeq {
    type Output = TokenId;

    fn index(&self, i: usize) -> &TokenId {
        &self.0[i]
    }
}

/// Length of the longest common prefix of two sequences.
pub fn lcp(a: &TokenSeq, b: &TokenSeq) -> usize {
    a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcp_basic() {
        assert_eq!(lcp(&TokenSeq::from([1, 2, 3]), &TokenSeq::from([1, 2, 3])), 3);
        assert_eq!(lcp(&TokenSeq::from([1, 2, 3]), &TokenSeq::new()), 0);
        assert_eq!(lcp(&TokenSeq::from([1, 2, 3]), &TokenSeq::from([1, 2, 4, 3])), 2);
    }

    #[test]
    fn vocab_encode_decode() {
        let vocab = Vocab::from_corpus(&["this is an example", "this is"]).unwrap();
        assert_eq!(vocab.size(), 5);
        let seq = vocab.encode("an example is").unwrap();
        assert_eq!(vocab.decode(&seq), "an example is");
        assert!(vocab.encode("missing").is_err());
    }

    #[test]
    fn vocab_rejects_bad_eos() {
        assert!(Vocab::new(3, TokenId(3)).is_err());
        assert!(Vocab::new(0, TokenId(0)).is_err());
    }

    #[test]
    fn seq_validation_catches_mid_eos() {
        let vocab = Vocab::new(5, TokenId(0)).unwrap();
        assert!(TokenSeq::from([1, 0, 2]).validate(&vocab).is_err());
        assert!(TokenSeq::from([1, 2, 0]).validate(&vocab).is_ok());
        assert!(TokenSeq::from([1, 9]).validate(&vocab).is_err());
    }
}
