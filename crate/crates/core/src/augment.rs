//! Sentence-level document augmentation.
//!
//! Four operators act on a [`SentenceDocument`]:
//!
//! | kind | one application                                           | length |
//! |------|-----------------------------------------------------------|--------|
//! | RI   | copy sentence `src` and insert the copy at position `at`  | k + 1  |
//! | RS   | exchange two distinct sentences                           | k      |
//! | RD   | remove one sentence (no-op when k = 1)                    | k - 1  |
//! | DR   | rotate so sentence `p` comes first                        | k      |
//!
//! An [`AugmentationSpec`] applies its operator `n` times in sequence,
//! re-drawing indices every time from a [`Stream`] seeded with the spec's
//! seed. Draw order per application:
//!
//! * RI: `src = index(k)`, then `at = index(k + 1)`;
//! * RS: `i = index(k)`, then `j' = index(k - 1)`, `j = j' + (j' >= i)`;
//!   no draws when k = 1;
//! * RD: `index(k)`; no draws when k = 1;
//! * DR: `p = index(k)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceDocument;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentationKind {
    /// Random insertion.
    RI,
    /// Random swap.
    RS,
    /// Random deletion.
    RD,
    /// Document rotation.
    DR,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 4] = [
        AugmentationKind::RI,
        AugmentationKind::RS,
        AugmentationKind::RD,
        AugmentationKind::DR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationKind::RI => "RI",
            AugmentationKind::RS => "RS",
            AugmentationKind::RD => "RD",
            AugmentationKind::DR => "DR",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RI" => Ok(AugmentationKind::RI),
            "RS" => Ok(AugmentationKind::RS),
            "RD" => Ok(AugmentationKind::RD),
            "DR" => Ok(AugmentationKind::DR),
            other => Err(Error::Validation(format!(
                "unknown augmentation kind {other:?} (expected RI, RS, RD or DR)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    n: usize,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation(
                "augmentation needs at least one operation (n >= 1)".into(),
            ));
        }
        Ok(Self { kind, n, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn apply(&self, doc: &SentenceDocument) -> SentenceDocument {
        apply(self, doc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedPair {
    pub first: SentenceDocument,
    pub second: SentenceDocument,
    pub source_index: usize,
    pub target_summary: String,
}

pub fn insert_copy(doc: &mut SentenceDocument, src: usize, at: usize) {
    let s = doc.sentences()[src].clone();
    doc.sentences_mut().insert(at, s);
}

pub fn swap(doc: &mut SentenceDocument, i: usize, j: usize) {
    doc.sentences_mut().swap(i, j);
}

/// Removes sentence `i` unless it is the only one.
pub fn delete(doc: &mut SentenceDocument, i: usize) {
    if doc.len() > 1 {
        doc.sentences_mut().remove(i);
    }
}

/// `[s_p, ..., s_k, s_1, ..., s_{p-1}]`.
pub fn rotate(doc: &mut SentenceDocument, pivot: usize) {
    doc.sentences_mut().rotate_left(pivot);
}

fn apply_once(kind: AugmentationKind, doc: &mut SentenceDocument, stream: &mut Stream) {
    let k = doc.len();
    match kind {
        AugmentationKind::RI => {
            let src = stream.index(k);
            let at = stream.index(k + 1);
            insert_copy(doc, src, at);
        }
        AugmentationKind::RS => {
            if k > 1 {
                let i = stream.index(k);
                let j = stream.index(k - 1);
                let j = if j >= i { j + 1 } else { j };
                swap(doc, i, j);
            }
        }
        AugmentationKind::RD => {
            if k > 1 {
                let i = stream.index(k);
                delete(doc, i);
            }
        }
        AugmentationKind::DR => {
            let p = stream.index(k);
            rotate(doc, p);
        }
    }
}

pub fn apply(spec: &AugmentationSpec, doc: &SentenceDocument) -> SentenceDocument {
    let mut stream = Stream::new(spec.seed);
    let mut out = doc.clone();
    for _ in 0..spec.n {
        apply_once(spec.kind, &mut out, &mut stream);
    }
    out
}

/// Seed of the stream for view `view` (0 or 1) of source document `index`.
pub fn view_seed(seed: u64, index: usize, view: usize) -> u64 {
    derive_seed(seed, &[index as u64, view as u64])
}

/// Builds both views of document `idx`; view `j` uses
/// `view_seed(spec_j.seed, idx, j)`.
pub fn make_pair(
    a1: &AugmentationSpec,
    a2: &AugmentationSpec,
    doc: &SentenceDocument,
    summary: &str,
    idx: usize,
) -> Result<AugmentedPair> {
    if summary.trim().is_empty() {
        return Err(Error::Validation("target summary is empty".into()));
    }
    let first = apply(&a1.with_seed(view_seed(a1.seed, idx, 0)), doc);
    let second = apply(&a2.with_seed(view_seed(a2.seed, idx, 1)), doc);
    Ok(AugmentedPair {
        first,
        second,
        source_index: idx,
        target_summary: summary.to_string(),
    })
}
