//! Document/summary pairs and sentence segmentation.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub document: String,
    pub summary: String,
}

impl RawExample {
    pub fn new(document: impl Into<String>, summary: impl Into<String>) -> Result<Self> {
        let ex = Self {
            document: document.into(),
            summary: summary.into(),
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.document.trim().is_empty() {
            return Err(Error::Validation("document is empty".into()));
        }
        if self.summary.trim().is_empty() {
            return Err(Error::Validation("summary is empty".into()));
        }
        Ok(())
    }
}

/// A document as an ordered, non-empty list of non-empty sentences.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentenceDocument {
    sentences: Vec<String>,
}

impl SentenceDocument {
    pub fn new(sentences: Vec<String>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Validation("document has no sentences".into()));
        }
        if sentences.iter().any(|s| s.trim().is_empty()) {
            return Err(Error::Validation("document contains an empty sentence".into()));
        }
        Ok(Self { sentences })
    }

    pub(crate) fn from_vec_unchecked(sentences: Vec<String>) -> Self {
        debug_assert!(!sentences.is_empty());
        Self { sentences }
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub(crate) fn sentences_mut(&mut self) -> &mut Vec<String> {
        &mut self.sentences
    }

    pub fn join(&self) -> String {
        self.sentences.join(" ")
    }
}

impl fmt::Display for SentenceDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. The
/// terminator stays with its sentence. No abbreviation handling: `"Dr. X"`
/// is two sentences.
pub fn split_sentences(text: &str) -> Result<SentenceDocument> {
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(Error::Validation(
            "cannot segment whitespace-only text".into(),
        ));
    }
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = normalized.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ' ' && current.is_empty() {
            continue;
        }
        current.push(c);
        if is_terminator(c) && matches!(chars.peek(), None | Some(' ')) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    let tail = current.trim_end();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    Ok(SentenceDocument::from_vec_unchecked(sentences))
}

pub fn join(doc: &SentenceDocument) -> String {
    doc.join()
}

#[derive(Deserialize)]
struct JsonlRecord {
    document: String,
    summary: String,
}

pub fn parse_jsonl(contents: &str) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let ex = RawExample {
            document: rec.document,
            summary: rec.summary,
        };
        if ex.validate().is_err() {
            return Err(Error::Validation(format!(
                "line {line_no}: document and summary must be non-empty"
            )));
        }
        out.push(ex);
    }
    Ok(out)
}

/// Reads one `{"document": ..., "summary": ...}` object per line, in order.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&contents)
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[RawExample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for ex in examples {
        buf.push_str(&serde_json::to_string(ex).expect("string fields serialize"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
