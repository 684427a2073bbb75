//! Joint contrastive + generation objective and the epoch loop.
//!
//! Each batch of `K` documents becomes `2K` augmented views. Every view is
//! encoded; the first-position rows feed the projection head and the
//! contrastive loss, and every view (or, with [`GenTarget::Original`], the
//! unaugmented document) is decoded under teacher forcing against the
//! original summary. The two losses are mixed as
//! `L = α·L_cl + (1 − α)·L_gen`.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::augment::{self, AugmentationSpec};
use crate::contrastive::contrastive_loss;
use crate::corpus::{split_sentences, RawExample, SentenceDocument};
use crate::error::{Error, Result};
use crate::model::{aggregate, Seq2Seq};
use crate::numeric::{AdamState, Binding, GradMode, Scalar, Tape, Var};
use crate::rng::{derive_seed, Stream};
use crate::tokenizer::{TokenSequence, Vocabulary, PAD};

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Which encoding the generation loss decodes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenTarget {
    /// Both augmented views, averaged.
    Views,
    /// The unaugmented document, once per example.
    Original,
}

impl GenTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            GenTarget::Views => "views",
            GenTarget::Original => "original",
        }
    }
}

impl fmt::Display for GenTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "views" => Ok(GenTarget::Views),
            "original" => Ok(GenTarget::Original),
            _ => Err(Error::Config(format!("unknown gen_target {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// `None` leaves the view unchanged.
    pub aug1: Option<AugmentationSpec>,
    pub aug2: Option<AugmentationSpec>,
    pub clip_norm: f64,
    pub gen_target: GenTarget,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub total: f64,
    pub contrastive: f64,
    pub generation: f64,
}

/// A corpus example split into sentences with its framed target.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub index: usize,
    pub document: SentenceDocument,
    pub summary: String,
    pub target: TokenSequence,
}

pub fn prepare(corpus: &[RawExample], vocab: &Vocabulary, max_tgt_len: usize) -> Result<Vec<PreparedExample>> {
    corpus
        .iter()
        .enumerate()
        .map(|(index, ex)| {
            ex.validate()?;
            Ok(PreparedExample {
                index,
                document: split_sentences(&ex.document)?,
                summary: ex.summary.clone(),
                target: vocab.encode(&ex.summary, true, max_tgt_len),
            })
        })
        .collect()
}

/// Token-level inputs for one batch: both views and the original document
/// per example, plus the framed target.
#[derive(Debug, Clone)]
pub struct Batch {
    pub views: Vec<[TokenSequence; 2]>,
    pub originals: Vec<TokenSequence>,
    pub targets: Vec<TokenSequence>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn epoch_spec(spec: &Option<AugmentationSpec>, epoch: usize) -> Option<AugmentationSpec> {
    spec.map(|s| s.with_seed(derive_seed(s.seed, &[epoch as u64])))
}

fn view(spec: &Option<AugmentationSpec>, doc: &SentenceDocument, idx: usize, j: usize) -> SentenceDocument {
    match spec {
        Some(s) => augment::apply(&s.with_seed(augment::view_seed(s.seed, idx, j)), doc),
        None => doc.clone(),
    }
}

/// Augments and tokenizes `examples` for `epoch`. View `j` of example `i`
/// draws from `view_seed(derive_seed(spec_j.seed, [epoch]), i, j)`.
pub fn build_batch(
    examples: &[&PreparedExample],
    vocab: &Vocabulary,
    cfg: &TrainingConfig,
    max_src_len: usize,
    epoch: usize,
) -> Batch {
    let specs = [epoch_spec(&cfg.aug1, epoch), epoch_spec(&cfg.aug2, epoch)];
    let encode = |d: &SentenceDocument| vocab.encode(&d.join(), true, max_src_len);
    Batch {
        views: examples
            .iter()
            .map(|ex| [0, 1].map(|j| encode(&view(&specs[j], &ex.document, ex.index, j))))
            .collect(),
        originals: examples.iter().map(|ex| encode(&ex.document)).collect(),
        targets: examples.iter().map(|ex| ex.target.clone()).collect(),
    }
}

/// Mean negative log-likelihood of `target[1..]` under `logits`, whose row
/// `t` predicts `target[t + 1]`. `PAD` targets are skipped.
pub fn cross_entropy<S: Scalar>(tape: &mut Tape<S>, logits: Var, target: &TokenSequence) -> Result<Var> {
    if target.len() < 2 {
        return Err(Error::Validation(format!(
            "target needs at least 2 tokens, got {}",
            target.len()
        )));
    }
    let (rows, vocab) = {
        let v = tape.value(logits);
        (v.rows(), v.cols())
    };
    if rows != target.len() - 1 {
        return Err(Error::shape("cross_entropy", &[rows, vocab], &[target.len() - 1, vocab]));
    }
    let picks: Vec<usize> = target.ids[1..]
        .iter()
        .enumerate()
        .filter(|&(_, &id)| id != PAD)
        .map(|(t, &id)| t * vocab + id)
        .collect();
    if picks.is_empty() {
        return Err(Error::Validation("target has no non-pad tokens to predict".into()));
    }
    if let Some(bad) = target.ids.iter().find(|&&id| id >= vocab) {
        return Err(Error::Validation(format!("target id {bad} outside vocabulary of {vocab}")));
    }
    let lp = tape.log_softmax(logits)?;
    let picked = tape.gather(lp, &picks)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -S::one()))
}

fn decoder_input(target: &TokenSequence) -> TokenSequence {
    TokenSequence::new(target.ids[..target.len() - 1].to_vec())
}

/// `α·l_cl + (1 − α)·l_gen`.
pub fn joint_loss<S: Scalar>(tape: &mut Tape<S>, l_cl: Var, l_gen: Var, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let a = tape.scale(l_cl, S::lit(alpha));
    let b = tape.scale(l_gen, S::lit(1.0 - alpha));
    tape.add(a, b)
}

fn mean_of<S: Scalar>(tape: &mut Tape<S>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, S::lit(1.0 / terms.len() as f64)))
}

/// Loss handles for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub total: Var,
    pub contrastive: Var,
    pub generation: Var,
}

/// Records the full joint loss of `batch` on `tape`.
pub fn batch_loss<S: Scalar>(
    tape: &mut Tape<S>,
    binding: &Binding,
    model: &Seq2Seq<S>,
    batch: &Batch,
    cfg: &TrainingConfig,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut firsts = Vec::with_capacity(2 * batch.len());
    let mut gen_terms = Vec::with_capacity(2 * batch.len());
    for (pair, target) in batch.views.iter().zip(&batch.targets) {
        let input = decoder_input(target);
        for v in pair {
            let ctx = model.encode(tape, binding, v)?;
            firsts.push(aggregate(tape, &ctx)?);
            if cfg.gen_target == GenTarget::Views {
                let logits = model.teacher_forced_logits(tape, binding, &ctx, &input)?;
                gen_terms.push(cross_entropy(tape, logits, target)?);
            }
        }
    }
    if cfg.gen_target == GenTarget::Original {
        for (doc, target) in batch.originals.iter().zip(&batch.targets) {
            let ctx = model.encode(tape, binding, doc)?;
            let logits = model.teacher_forced_logits(tape, binding, &ctx, &decoder_input(target))?;
            gen_terms.push(cross_entropy(tape, logits, target)?);
        }
    }
    let h = tape.concat_rows(&firsts)?;
    let z = model.head.project(tape, binding, h)?;
    let contrastive = contrastive_loss(tape, z, cfg.tau)?;
    let generation = mean_of(tape, &gen_terms)?;
    let total = joint_loss(tape, contrastive, generation, cfg.alpha)?;
    Ok(BatchLoss {
        total,
        contrastive,
        generation,
    })
}

/// Document order for `epoch`: a Fisher-Yates shuffle of `0..n` seeded by
/// `derive_seed(seed, [SHUFFLE_TAG, epoch])`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(derive_seed(seed, &[SHUFFLE_TAG, epoch as u64])).shuffle(&mut order);
    order
}

/// One optimizer step on `batch`; returns `(L, L_cl, L_gen)`.
pub fn train_step<S: Scalar>(
    model: &mut Seq2Seq<S>,
    adam: &mut AdamState<S>,
    batch: &Batch,
    cfg: &TrainingConfig,
    epoch: usize,
    index: usize,
) -> Result<LossRecord> {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape, GradMode::Trainable);
    let loss = batch_loss(&mut tape, &binding, model, batch, cfg)?;
    let value = |v: Var| tape.value(v).data()[0].to_f64_lossy();
    let record = LossRecord {
        epoch,
        batch: index,
        total: value(loss.total),
        contrastive: value(loss.contrastive),
        generation: value(loss.generation),
    };
    if !record.total.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            batch: index,
            detail: format!(
                "L = {}, L_cl = {}, L_gen = {}",
                record.total, record.contrastive, record.generation
            ),
        });
    }
    let grads = tape.backward(loss.total)?;
    model.params.accumulate(&grads, &binding);
    model.params.clip_grad_norm(S::lit(cfg.clip_norm));
    adam.step(&mut model.params)?;
    Ok(record)
}

/// Trains one epoch over `corpus` in shuffled batches of `batch_size`; the
/// final partial batch is kept.
pub fn train_epoch<S: Scalar>(
    model: &mut Seq2Seq<S>,
    adam: &mut AdamState<S>,
    vocab: &Vocabulary,
    cfg: &TrainingConfig,
    corpus: &[PreparedExample],
    epoch: usize,
) -> Result<Vec<LossRecord>> {
    if corpus.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    cfg.validate()?;
    let order = epoch_order(cfg.seed, epoch, corpus.len());
    let max_src = model.config().max_src_len;
    order
        .chunks(cfg.batch_size)
        .enumerate()
        .map(|(b, idx)| {
            let examples: Vec<&PreparedExample> = idx.iter().map(|&i| &corpus[i]).collect();
            let batch = build_batch(&examples, vocab, cfg, max_src, epoch);
            train_step(model, adam, &batch, cfg, epoch, b)
        })
        .collect()
}

/// Runs `cfg.epochs` epochs. With `checkpoint_dir`, writes
/// `epoch-{e}.ckpt` after each epoch.
pub fn train<S: Scalar>(
    model: &mut Seq2Seq<S>,
    vocab: &Vocabulary,
    cfg: &TrainingConfig,
    corpus: &[RawExample],
    checkpoint_dir: Option<&Path>,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let prepared = prepare(corpus, vocab, model.config().max_tgt_len)?;
    let mut adam = AdamState::new(S::lit(cfg.lr));
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        history.extend(train_epoch(model, &mut adam, vocab, cfg, &prepared, epoch)?);
        if let Some(dir) = checkpoint_dir {
            model.params.save(dir.join(format!("epoch-{epoch}.ckpt")))?;
        }
    }
    Ok(history)
}

pub const LOSS_CSV_HEADER: &str = "epoch,batch,L,L_cl,L_gen";

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.batch, r.total, r.contrastive, r.generation
        ));
    }
    out
}

pub fn write_loss_csv(path: impl AsRef<Path>, records: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(loss_csv(records).as_bytes()).map_err(|e| Error::io(path, e))
}
