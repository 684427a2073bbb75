//! ROUGE-1/2/L scoring and subpopulation robustness slices.
//!
//! Scoring tokenizes independently of the model vocabulary: lowercase, every
//! non-alphanumeric character becomes a space, split on whitespace. No
//! stemming, no stopword removal; F1 is the balanced harmonic mean.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{normalize_whitespace, RawExample};
use crate::error::{Error, Result};
use crate::model::Seq2Seq;
use crate::numeric::Scalar;
use crate::tokenizer::Vocabulary;

pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// From a match count and the two totals; zero totals give zero.
    pub fn from_counts(matched: usize, cand: usize, reference: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, cand);
        let recall = ratio(matched, reference);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }

    fn add(self, o: Self) -> Self {
        Self {
            precision: self.precision + o.precision,
            recall: self.recall + o.recall,
            f1: self.f1 + o.f1,
        }
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            precision: self.precision * s,
            recall: self.recall * s,
            f1: self.f1 * s,
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn rouge_n_tokens(cand: &[String], reference: &[String], n: usize) -> Prf {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let overlap = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(
        overlap,
        cand.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Clipped n-gram overlap for `n` in `{1, 2}`.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<Prf> {
    if !(1..=2).contains(&n) {
        return Err(Error::Contract(format!("rouge_n supports n in {{1, 2}}, got {n}")));
    }
    Ok(rouge_n_tokens(&rouge_tokens(candidate), &rouge_tokens(reference), n))
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // row[j] = LCS(a[..i], b[..j]); `diag` carries the previous row's row[j - 1]
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    Prf::from_counts(lcs_len(&c, &r), c.len(), r.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

impl RougeScore {
    pub fn score(candidate: &str, reference: &str) -> Self {
        let c = rouge_tokens(candidate);
        let r = rouge_tokens(reference);
        Self {
            rouge1: rouge_n_tokens(&c, &r, 1),
            rouge2: rouge_n_tokens(&c, &r, 2),
            rouge_l: Prf::from_counts(lcs_len(&c, &r), c.len(), r.len()),
        }
    }

    /// Component-wise mean; the empty mean is all zeros.
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a RougeScore>) -> Self {
        let mut acc = RougeScore::default();
        let mut n = 0usize;
        for s in scores {
            acc.rouge1 = acc.rouge1.add(s.rouge1);
            acc.rouge2 = acc.rouge2.add(s.rouge2);
            acc.rouge_l = acc.rouge_l.add(s.rouge_l);
            n += 1;
        }
        if n == 0 {
            return acc;
        }
        let k = 1.0 / n as f64;
        Self {
            rouge1: acc.rouge1.scaled(k),
            rouge2: acc.rouge2.scaled(k),
            rouge_l: acc.rouge_l.scaled(k),
        }
    }

    pub fn f1s(&self) -> [f64; 3] {
        [self.rouge1.f1, self.rouge2.f1, self.rouge_l.f1]
    }

    pub fn is_finite(&self) -> bool {
        self.f1s().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Length,
    Abstractiveness,
    Distillation,
    Position,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Length,
        Metric::Abstractiveness,
        Metric::Distillation,
        Metric::Position,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Length => "length",
            Metric::Abstractiveness => "abstractiveness",
            Metric::Distillation => "distillation",
            Metric::Position => "position",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Per-example sub-population features, over ROUGE tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpopMetrics {
    /// Source token count.
    pub length: usize,
    /// Fraction of summary bigrams absent from the source; 0 without bigrams.
    pub abstractiveness: f64,
    /// Source tokens per summary token (summary count floored at 1).
    pub distillation: f64,
    /// Mean of `first_index / length` over summary tokens found in the
    /// source; 1 when none are found.
    pub position: f64,
}

impl SubpopMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Length => self.length as f64,
            Metric::Abstractiveness => self.abstractiveness,
            Metric::Distillation => self.distillation,
            Metric::Position => self.position,
        }
    }
}

pub fn compute_metrics(ex: &RawExample) -> Result<SubpopMetrics> {
    ex.validate()?;
    let src = rouge_tokens(&ex.document);
    let sum = rouge_tokens(&ex.summary);
    if src.is_empty() {
        return Err(Error::Validation("document has no scoreable tokens".into()));
    }
    let src_bigrams = ngrams(&src, 2);
    let sum_bigrams: Vec<&[String]> = sum.windows(2).collect();
    let abstractiveness = if sum_bigrams.is_empty() {
        0.0
    } else {
        let novel = sum_bigrams.iter().filter(|g| !src_bigrams.contains_key(*g)).count();
        novel as f64 / sum_bigrams.len() as f64
    };
    let mut first = HashMap::new();
    for (i, t) in src.iter().enumerate() {
        first.entry(t.as_str()).or_insert(i);
    }
    let hits: Vec<f64> = sum
        .iter()
        .filter_map(|t| first.get(t.as_str()))
        .map(|&i| i as f64 / src.len() as f64)
        .collect();
    let position = if hits.is_empty() {
        1.0
    } else {
        hits.iter().sum::<f64>() / hits.len() as f64
    };
    Ok(SubpopMetrics {
        length: src.len(),
        abstractiveness,
        distillation: src.len() as f64 / sum.len().max(1) as f64,
        position,
    })
}

/// Indices of the top and bottom `ceil(0.1·N)` examples by `values`,
/// ordered descending with ties broken by ascending index.
pub fn slice_deciles(values: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = values.len();
    if n < 10 {
        return Err(Error::Validation(format!("slicing needs at least 10 examples, got {n}")));
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Validation(format!("metric value of example {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let k = n.div_ceil(10);
    Ok((order[..k].to_vec(), order[n - k..].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSlices {
    pub metric: Metric,
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
    pub top_score: RougeScore,
    pub bottom_score: RougeScore,
}

impl MetricSlices {
    /// Top minus bottom F1 for RG-1, RG-2, RG-L.
    pub fn gap(&self) -> [f64; 3] {
        let (t, b) = (self.top_score.f1s(), self.bottom_score.f1s());
        [t[0] - b[0], t[1] - b[1], t[2] - b[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub metrics: Vec<MetricSlices>,
}

pub const SLICE_CSV_HEADER: &str = "metric,slice,rg1,rg2,rgl";

impl SliceReport {
    pub fn build(corpus: &[RawExample], scores: &[RougeScore]) -> Result<Self> {
        if corpus.len() != scores.len() {
            return Err(Error::Contract(format!(
                "{} examples but {} scores",
                corpus.len(),
                scores.len()
            )));
        }
        let feats = corpus.iter().map(compute_metrics).collect::<Result<Vec<_>>>()?;
        let metrics = Metric::ALL
            .into_iter()
            .map(|metric| {
                let values: Vec<f64> = feats.iter().map(|f| f.get(metric)).collect();
                let (top, bottom) = slice_deciles(&values)?;
                Ok(MetricSlices {
                    metric,
                    top_score: RougeScore::mean(top.iter().map(|&i| &scores[i])),
                    bottom_score: RougeScore::mean(bottom.iter().map(|&i| &scores[i])),
                    top,
                    bottom,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { metrics })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SLICE_CSV_HEADER}\n");
        for m in &self.metrics {
            for (name, s) in [("top", &m.top_score), ("bottom", &m.bottom_score)] {
                let [a, b, c] = s.f1s();
                out.push_str(&format!("{},{name},{a},{b},{c}\n", m.metric));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: RougeScore,
    pub per_example: Vec<RougeScore>,
    pub predictions: Vec<String>,
    /// Absent when the corpus has fewer than 10 examples.
    pub slices: Option<SliceReport>,
}

pub const SCORE_CSV_HEADER: &str = "variant,precision,recall,f1";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SCORE_CSV_HEADER}\n");
        for (name, p) in self.variants() {
            out.push_str(&format!("{name},{},{},{}\n", p.precision, p.recall, p.f1));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>9} {:>9} {:>9}\n", "variant", "precision", "recall", "f1");
        for (name, p) in self.variants() {
            out.push_str(&format!(
                "{name:<8} {:>9.4} {:>9.4} {:>9.4}\n",
                p.precision, p.recall, p.f1
            ));
        }
        out
    }

    fn variants(&self) -> [(&'static str, Prf); 3] {
        [
            ("rouge1", self.overall.rouge1),
            ("rouge2", self.overall.rouge2),
            ("rougeL", self.overall.rouge_l),
        ]
    }
}

/// Greedy-decodes every document, scores it against its reference and
/// aggregates overall and per-slice means. Decoding runs in parallel.
pub fn evaluate<S: Scalar>(
    model: &Seq2Seq<S>,
    vocab: &Vocabulary,
    corpus: &[RawExample],
    max_len: usize,
) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::Validation("evaluation corpus is empty".into()));
    }
    let max_src = model.config().max_src_len;
    let predictions = corpus
        .par_iter()
        .map(|ex| {
            ex.validate()?;
            let src = vocab.encode(&normalize_whitespace(&ex.document), true, max_src);
            let out = model.summarize(&src, max_len)?;
            vocab.decode(&out)
        })
        .collect::<Result<Vec<String>>>()?;
    let per_example: Vec<RougeScore> = predictions
        .iter()
        .zip(corpus)
        .map(|(p, ex)| RougeScore::score(p, &ex.summary))
        .collect();
    let slices = if corpus.len() >= 10 {
        Some(SliceReport::build(corpus, &per_example)?)
    } else {
        None
    };
    Ok(EvalReport {
        overall: RougeScore::mean(&per_example),
        per_example,
        predictions,
        slices,
    })
}
