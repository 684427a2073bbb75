//! Word-level vocabulary.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::RawExample;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Lowercases and strips leading/trailing non-alphanumeric characters.
pub fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(normalize_word)
        .filter(|w| !w.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_framed(&self) -> bool {
        self.ids.first() == Some(&BOS) && self.ids.last() == Some(&EOS) && self.ids.len() >= 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Counts normalized words over documents and summaries, orders them by
    /// descending count then lexicographically, drops those seen fewer than
    /// `min_freq` times and keeps at most `max_size - 4`.
    pub fn build(examples: &[RawExample], max_size: usize, min_freq: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Validation("cannot build a vocabulary from an empty corpus".into()));
        }
        if max_size < NUM_RESERVED {
            return Err(Error::Validation(format!(
                "vocabulary max_size {max_size} is smaller than the {NUM_RESERVED} reserved ids"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for ex in examples {
            for w in words(&ex.document).chain(words(&ex.summary)) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq && !RESERVED.contains(&w.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_RESERVED);
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w).collect())
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Unknown words map to [`UNK`]. With `add_frame` the output is
    /// `BOS .. EOS`, and truncation to `max_len` keeps the final `EOS`.
    pub fn encode(&self, text: &str, add_frame: bool, max_len: usize) -> TokenSequence {
        let max_len = max_len.max(1);
        let body = words(text).map(|w| self.id(&w).unwrap_or(UNK));
        let ids: Vec<usize> = if add_frame {
            if max_len == 1 {
                vec![BOS]
            } else {
                let mut ids = vec![BOS];
                ids.extend(body.take(max_len - 2));
                ids.push(EOS);
                ids
            }
        } else {
            let ids: Vec<usize> = body.take(max_len).collect();
            if ids.is_empty() {
                vec![UNK]
            } else {
                ids
            }
        };
        TokenSequence { ids }
    }

    /// Drops PAD/BOS/EOS and joins the rest with single spaces; UNK renders as
    /// `<unk>`.
    pub fn decode(&self, seq: &TokenSequence) -> Result<String> {
        let mut out: Vec<&str> = Vec::with_capacity(seq.len());
        for &id in &seq.ids {
            let tok = self.token(id).ok_or_else(|| {
                Error::Validation(format!("token id {id} out of range for vocabulary of {}", self.len()))
            })?;
            if !matches!(id, PAD | BOS | EOS) {
                out.push(tok);
            }
        }
        Ok(out.join(" "))
    }

    /// One token per line in id order; the first four lines are the reserved
    /// tokens `<pad> <unk> <bos> <eos>`.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for tok in &self.id_to_token {
            s.push_str(tok);
            s.push('\n');
        }
        s
    }

    pub fn from_file_string(contents: &str) -> Result<Self> {
        let lines: Vec<&str> = contents.lines().collect();
        if lines.len() < NUM_RESERVED || lines[..NUM_RESERVED] != RESERVED {
            return Err(Error::Validation(
                "vocabulary file must start with <pad>, <unk>, <bos>, <eos>".into(),
            ));
        }
        Self::from_tokens(lines[NUM_RESERVED..].iter().map(|s| s.to_string()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(&s)
    }
}

pub fn build_vocab(examples: &[RawExample], max_size: usize, min_freq: usize) -> Result<Vocabulary> {
    Vocabulary::build(examples, max_size, min_freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(doc: &str) -> Vec<RawExample> {
        vec![RawExample::new(doc, "x").unwrap()]
    }

    #[test]
    fn frequency_ordering() {
        let v = build_vocab(&corpus("a a b"), 10, 1).unwrap();
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        assert!(a < b);
        assert!(a >= NUM_RESERVED);
    }

    #[test]
    fn min_freq_threshold() {
        let v = build_vocab(&corpus("a a b"), 10, 2).unwrap();
        assert_eq!(v.id("b"), None);
        assert_eq!(v.encode("b", false, 8).ids, vec![UNK]);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = build_vocab(&corpus("zeta alpha zeta alpha"), 10, 1).unwrap();
        assert!(v.id("alpha").unwrap() < v.id("zeta").unwrap());
    }

    #[test]
    fn max_size_truncates() {
        let v = build_vocab(&corpus("a a a b b c"), 6, 1).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.id("c").is_none());
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_vocab(&[], 10, 1).is_err());
    }

    #[test]
    fn oov_maps_to_unk() {
        let v = build_vocab(&corpus("hello world"), 10, 1).unwrap();
        let s = v.encode("hello mars", false, 8);
        assert_eq!(s.ids[1], UNK);
    }

    #[test]
    fn framed_truncation_keeps_eos() {
        let v = build_vocab(&corpus("a b c d"), 10, 1).unwrap();
        let s = v.encode("a b c d", true, 3);
        assert_eq!(s.ids, vec![BOS, v.id("a").unwrap(), EOS]);
        assert!(s.is_framed());
    }

    #[test]
    fn decode_examples() {
        let v = build_vocab(&corpus("hello"), 10, 1).unwrap();
        let h = v.id("hello").unwrap();
        assert_eq!(v.decode(&TokenSequence::new(vec![BOS, h, EOS])).unwrap(), "hello");
        assert_eq!(v.decode(&TokenSequence::new(vec![UNK])).unwrap(), "<unk>");
        assert_eq!(v.decode(&TokenSequence::new(vec![BOS, EOS])).unwrap(), "");
        assert!(v.decode(&TokenSequence::new(vec![v.len()])).is_err());
    }

    #[test]
    fn file_roundtrip_is_byte_stable() {
        let c = corpus("The cat, the dog! A cat.");
        let v = build_vocab(&c, 50, 1).unwrap();
        let s = v.to_file_string();
        assert_eq!(build_vocab(&c, 50, 1).unwrap().to_file_string(), s);
        assert_eq!(Vocabulary::from_file_string(&s).unwrap(), v);
        assert!(Vocabulary::from_file_string("a\nb\n").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_in_vocabulary(ws in proptest::collection::vec("[a-z]{1,5}", 1..12)) {
            let text = ws.join(" ");
            let v = build_vocab(&corpus(&text), 100, 1).unwrap();
            let seq = v.encode(&text, true, 64);
            prop_assert!(seq.is_framed());
            prop_assert!(seq.ids.iter().all(|&i| i < v.len()));
            prop_assert_eq!(v.decode(&seq).unwrap(), text);
        }
    }
}
