//! Whitespace tokenizer with byte-level fallback.
//!
//! Token id layout: 0 = <pad>, 1 = <bos>, 2 = <eos>, 3..259 = raw bytes,
//! 259.. = vocabulary words. Whitespace runs and out-of-vocabulary words are
//! emitted as byte tokens, so decode(encode(text)) == text for any input.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
const BYTE_BASE: usize = 3;
const WORD_BASE: usize = BYTE_BASE + 256;

/// Token ids plus the special-token conventions they were produced under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    /// Validates ids against a vocabulary size and the no-interior-pad rule.
    pub fn new(ids: Vec<usize>, vocab_size: usize, max_len: usize) -> Result<Self> {
        if ids.len() > max_len {
            return Err(Error::InvalidTokenSequence(format!(
                "length {} exceeds max {}",
                ids.len(),
                max_len
            )));
        }
        for &id in &ids {
            if id >= vocab_size {
                return Err(Error::TokenOutOfRange { id, vocab: vocab_size });
            }
        }
        // pad may only appear as a trailing run
        let content_end = ids.iter().rposition(|&id| id != PAD_ID).map_or(0, |i| i + 1);
        if ids[..content_end].contains(&PAD_ID) {
            return Err(Error::InvalidTokenSequence("pad id interior to sequence".into()));
        }
        Ok(TokenSequence { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Word-level tokenizer over a fixed vocabulary, with byte fallback.
#[derive(Debug, Clone)]
pub struct ToyTokenizer {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl ToyTokenizer {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut uniq = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            if !w.is_empty() && !w.chars().any(char::is_whitespace) && !index.contains_key(&w) {
                index.insert(w.clone(), WORD_BASE + uniq.len());
                uniq.push(w);
            }
        }
        ToyTokenizer { words: uniq, index }
    }

    /// Builds a vocabulary from the words of a text corpus, in first-seen order.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen = Vec::new();
        let mut have = std::collections::HashSet::new();
        for t in texts {
            for w in t.split_whitespace() {
                if have.insert(w.to_string()) {
                    seen.push(w.to_string());
                }
            }
        }
        ToyTokenizer::new(seen)
    }

    /// One word per line.
    pub fn load_vocab(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(ToyTokenizer::new(text.lines().map(str::to_string)))
    }

    pub fn save_vocab(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        WORD_BASE + self.words.len()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i].is_ascii_whitespace() {
                ids.push(BYTE_BASE + bytes[i] as usize);
                i += 1;
                continue;
            }
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let word = &text[start..i];
            match self.index.get(word) {
                Some(&id) => ids.push(id),
                None => ids.extend(word.bytes().map(|b| BYTE_BASE + b as usize)),
            }
        }
        ids
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            match id {
                PAD_ID | BOS_ID | EOS_ID => {}
                _ if id < WORD_BASE => bytes.push((id - BYTE_BASE) as u8),
                _ => {
                    let w = self
                        .words
                        .get(id - WORD_BASE)
                        .ok_or(Error::TokenOutOfRange { id, vocab: self.vocab_size() })?;
                    bytes.extend_from_slice(w.as_bytes());
                }
            }
        }
        // encode() only ever emits valid UTF-8 byte runs, but generated ids
        // can be arbitrary bytes; decode those lossily rather than failing
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Encoding of a target caption: content tokens followed by <eos>.
    pub fn encode_target(&self, text: &str) -> Vec<usize> {
        let mut ids = self.encode(text);
        ids.push(EOS_ID);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok() -> ToyTokenizer {
        ToyTokenizer::from_corpus(["the cat sat on the mat"])
    }

    #[test]
    fn round_trip_in_vocab() {
        let t = tok();
        let text = "the cat sat";
        assert_eq!(t.decode(&t.encode(text)).unwrap(), text);
    }

    #[test]
    fn unknown_words_fall_back_to_bytes() {
        let t = tok();
        let ids = t.encode("dog");
        assert_eq!(ids, vec![BYTE_BASE + b'd' as usize, BYTE_BASE + b'o' as usize, BYTE_BASE + b'g' as usize]);
        assert_eq!(t.decode(&ids).unwrap(), "dog");
    }

    #[test]
    fn interior_pad_rejected() {
        let t = tok();
        let err = TokenSequence::new(vec![5, PAD_ID, 5], t.vocab_size(), 16);
        assert!(err.is_err());
        // trailing pad run is fine
        assert!(TokenSequence::new(vec![5, PAD_ID, PAD_ID], t.vocab_size(), 16).is_ok());
    }

    #[test]
    fn out_of_range_id_rejected() {
        let t = tok();
        assert!(TokenSequence::new(vec![t.vocab_size()], t.vocab_size(), 8).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_text(text in "\\PC{0,60}") {
            let t = tok();
            prop_assert_eq!(t.decode(&t.encode(&text)).unwrap(), text);
        }

        #[test]
        fn round_trip_whitespace_runs(text in "[a-z \\t\\n]{0,40}") {
            let t = tok();
            prop_assert_eq!(t.decode(&t.encode(&text)).unwrap(), text);
        }
    }
}
