//! Pre-layernorm Transformer encoder/decoder with tied output embeddings.
//!
//! Parameters live in one [`ParamStore`]: token embeddings (shared by the
//! encoder input, decoder input and output projection), learned positional
//! tables for each side, the encoder and decoder stacks, final layernorms,
//! and the contrastive [`ProjectionHead`].
//!
//! Sequences are processed one at a time; `PAD` positions are masked out of
//! every attention as keys.

use serde::{Deserialize, Serialize};

use crate::contrastive::ProjectionHead;
use crate::error::{Error, Result};
use crate::numeric::{Binding, GradMode, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::rng::Stream;
use crate::tokenizer::{TokenSequence, BOS, EOS, PAD};

pub const INIT_SCALE: f64 = 0.08;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub d_proj: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub freeze_layers: usize,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            enc_layers: 2,
            dec_layers: 2,
            heads: 2,
            d_model: 32,
            d_ff: 64,
            d_proj: 16,
            max_src_len: 64,
            max_tgt_len: 24,
            freeze_layers: 0,
        }
    }

    /// 12-layer encoder, 6-layer decoder, 16 heads, 128-d projection, first 6
    /// encoder layers frozen. Width and lengths follow the BART-large family.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            enc_layers: 12,
            dec_layers: 6,
            heads: 16,
            d_model: 1024,
            d_ff: 4096,
            d_proj: 128,
            max_src_len: 1024,
            max_tgt_len: 142,
            freeze_layers: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.vocab_size <= EOS {
            return fail(format!("vocab_size {} leaves no room for words", self.vocab_size));
        }
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            ));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if self.d_proj < 2 {
            return fail(format!("d_proj must be at least 2, got {}", self.d_proj));
        }
        if self.max_src_len < 2 || self.max_tgt_len < 2 {
            return fail("max_src_len and max_tgt_len must be at least 2".into());
        }
        if self.freeze_layers > self.enc_layers {
            return fail(format!(
                "freeze_layers {} exceeds enc_layers {}",
                self.freeze_layers, self.enc_layers
            ));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Attention {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

#[derive(Debug, Clone)]
struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ffn: FeedForward,
}

impl EncoderLayer {
    fn params(&self) -> Vec<ParamId> {
        let mut v = vec![self.norm1.gain, self.norm1.bias, self.norm2.gain, self.norm2.bias];
        v.extend(self.attn.params());
        v.extend(self.ffn.params());
        v
    }
}

impl Attention {
    fn params(&self) -> [ParamId; 8] {
        [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]
    }
}

impl FeedForward {
    fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Contextualized source representation `h` (one row per source position)
/// and per-position validity (`false` for `PAD`).
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub h: Var,
    pub mask: Vec<bool>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Seq2Seq<S> {
    config: ModelConfig,
    pub params: ParamStore<S>,
    tok_embed: ParamId,
    enc_pos: ParamId,
    dec_pos: ParamId,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
    pub head: ProjectionHead,
}

struct Builder<'a, S> {
    store: &'a mut ParamStore<S>,
    rng: &'a mut Stream,
}

impl<S: Scalar> Builder<'_, S> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> Result<ParamId> {
        self.store.add_uniform(name, &[rows, cols], INIT_SCALE, self.rng)
    }

    fn zeros(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(&[n]))
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Result<Norm> {
        Ok(Norm {
            gain: self.store.add(format!("{prefix}.gain"), Tensor::filled(&[d], S::one()))?,
            bias: self.zeros(format!("{prefix}.bias"), d)?,
        })
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Result<Attention> {
        Ok(Attention {
            wq: self.matrix(format!("{prefix}.wq"), d, d)?,
            bq: self.zeros(format!("{prefix}.bq"), d)?,
            wk: self.matrix(format!("{prefix}.wk"), d, d)?,
            bk: self.zeros(format!("{prefix}.bk"), d)?,
            wv: self.matrix(format!("{prefix}.wv"), d, d)?,
            bv: self.zeros(format!("{prefix}.bv"), d)?,
            wo: self.matrix(format!("{prefix}.wo"), d, d)?,
            bo: self.zeros(format!("{prefix}.bo"), d)?,
        })
    }

    fn ffn(&mut self, prefix: &str, d: usize, ff: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            w1: self.matrix(format!("{prefix}.w1"), d, ff)?,
            b1: self.zeros(format!("{prefix}.b1"), ff)?,
            w2: self.matrix(format!("{prefix}.w2"), ff, d)?,
            b2: self.zeros(format!("{prefix}.b2"), d)?,
        })
    }
}

fn causal_mask(len: usize, keys: &[bool]) -> Vec<bool> {
    (0..len * len)
        .map(|f| {
            let (q, k) = (f / len, f % len);
            k <= q && keys[k]
        })
        .collect()
}

fn key_mask(queries: usize, keys: &[bool]) -> Vec<bool> {
    (0..queries).flat_map(|_| keys.iter().copied()).collect()
}

impl<S: Scalar> Seq2Seq<S> {
    /// Builds a model with weight matrices drawn from `uniform(-0.08, 0.08)`
    /// in registration order, layernorm gains at one and biases at zero, then
    /// applies `config.freeze_layers`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Stream::new(seed);
        let (d, ff) = (config.d_model, config.d_ff);
        let mut b = Builder {
            store: &mut store,
            rng: &mut rng,
        };
        let tok_embed = b.matrix("embed.tokens".into(), config.vocab_size, d)?;
        let enc_pos = b.matrix("encoder.positions".into(), config.max_src_len, d)?;
        let dec_pos = b.matrix("decoder.positions".into(), config.max_tgt_len, d)?;
        let mut encoder = Vec::with_capacity(config.enc_layers);
        for i in 0..config.enc_layers {
            let p = format!("encoder.{i}");
            encoder.push(EncoderLayer {
                norm1: b.norm(&format!("{p}.norm1"), d)?,
                attn: b.attention(&format!("{p}.self_attn"), d)?,
                norm2: b.norm(&format!("{p}.norm2"), d)?,
                ffn: b.ffn(&format!("{p}.ffn"), d, ff)?,
            });
        }
        let enc_norm = b.norm("encoder.final_norm", d)?;
        let mut decoder = Vec::with_capacity(config.dec_layers);
        for i in 0..config.dec_layers {
            let p = format!("decoder.{i}");
            decoder.push(DecoderLayer {
                norm1: b.norm(&format!("{p}.norm1"), d)?,
                self_attn: b.attention(&format!("{p}.self_attn"), d)?,
                norm2: b.norm(&format!("{p}.norm2"), d)?,
                cross_attn: b.attention(&format!("{p}.cross_attn"), d)?,
                norm3: b.norm(&format!("{p}.norm3"), d)?,
                ffn: b.ffn(&format!("{p}.ffn"), d, ff)?,
            });
        }
        let dec_norm = b.norm("decoder.final_norm", d)?;
        let head = ProjectionHead::new(b.store, d, config.d_proj, INIT_SCALE, b.rng)?;
        let mut model = Self {
            config,
            params: store,
            tok_embed,
            enc_pos,
            dec_pos,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            head,
        };
        model.set_frozen(config.freeze_layers)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn bind(&self, tape: &mut Tape<S>, mode: GradMode) -> Binding {
        self.params.bind(tape, mode)
    }

    /// Parameters of encoder layer `i`.
    pub fn encoder_layer_params(&self, i: usize) -> Vec<ParamId> {
        self.encoder[i].params()
    }

    pub fn embedding_params(&self) -> [ParamId; 2] {
        [self.tok_embed, self.enc_pos]
    }

    /// Freezes the token embeddings, the encoder positions and encoder layers
    /// `0..l`; the encoder's final norm freezes only when `l` covers every
    /// layer. Everything else becomes trainable.
    pub fn set_frozen(&mut self, l: usize) -> Result<()> {
        if l > self.config.enc_layers {
            return Err(Error::Contract(format!(
                "cannot freeze {l} of {} encoder layers",
                self.config.enc_layers
            )));
        }
        let ids: Vec<ParamId> = self.params.iter().map(|(id, _)| id).collect();
        for id in ids {
            self.params.set_frozen(id, false);
        }
        if l > 0 {
            for id in self.embedding_params() {
                self.params.set_frozen(id, true);
            }
            for i in 0..l {
                for id in self.encoder[i].params() {
                    self.params.set_frozen(id, true);
                }
            }
            if l == self.config.enc_layers {
                self.params.set_frozen(self.enc_norm.gain, true);
                self.params.set_frozen(self.enc_norm.bias, true);
            }
        }
        self.config.freeze_layers = l;
        Ok(())
    }

    fn norm(&self, tape: &mut Tape<S>, b: &Binding, n: &Norm, x: Var) -> Result<Var> {
        let y = tape.layernorm(x, S::lit(LN_EPS));
        let y = tape.mul_row(y, b.var(n.gain))?;
        tape.add_row(y, b.var(n.bias))
    }

    fn linear(&self, tape: &mut Tape<S>, b: &Binding, w: ParamId, bias: ParamId, x: Var) -> Result<Var> {
        let y = tape.matmul(x, b.var(w))?;
        tape.add_row(y, b.var(bias))
    }

    fn attention(
        &self,
        tape: &mut Tape<S>,
        b: &Binding,
        a: &Attention,
        queries: Var,
        keys: Var,
        mask: &[bool],
    ) -> Result<Var> {
        let q = self.linear(tape, b, a.wq, a.bq, queries)?;
        let k = self.linear(tape, b, a.wk, a.bk, keys)?;
        let v = self.linear(tape, b, a.wv, a.bv, keys)?;
        let dh = self.config.head_dim();
        let scale = S::lit(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let probs = tape.softmax_masked(scores, Some(mask.to_vec()))?;
            heads.push(tape.matmul(probs, vh)?);
        }
        let joined = tape.concat_cols(&heads)?;
        self.linear(tape, b, a.wo, a.bo, joined)
    }

    fn ffn(&self, tape: &mut Tape<S>, b: &Binding, f: &FeedForward, x: Var) -> Result<Var> {
        let h = self.linear(tape, b, f.w1, f.b1, x)?;
        let h = tape.relu(h);
        self.linear(tape, b, f.w2, f.b2, h)
    }

    fn embed(&self, tape: &mut Tape<S>, b: &Binding, ids: &[usize], pos: ParamId) -> Result<Var> {
        let tokens = tape.embedding(b.var(self.tok_embed), ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = tape.embedding(b.var(pos), &positions)?;
        tape.add(tokens, p)
    }

    /// Bidirectional encoding of `src`; output has one row per token.
    pub fn encode(&self, tape: &mut Tape<S>, b: &Binding, src: &TokenSequence) -> Result<EncoderOutput> {
        let n = src.len();
        if n == 0 || n > self.config.max_src_len {
            return Err(Error::Contract(format!(
                "source length {n} outside 1..={}",
                self.config.max_src_len
            )));
        }
        let valid: Vec<bool> = src.ids.iter().map(|&t| t != PAD).collect();
        let mask = key_mask(n, &valid);
        let mut x = self.embed(tape, b, &src.ids, self.enc_pos)?;
        for layer in &self.encoder {
            let h = self.norm(tape, b, &layer.norm1, x)?;
            let h = self.attention(tape, b, &layer.attn, h, h, &mask)?;
            let x1 = tape.add(x, h)?;
            let h = self.norm(tape, b, &layer.norm2, x1)?;
            let h = self.ffn(tape, b, &layer.ffn, h)?;
            x = tape.add(x1, h)?;
        }
        let h = self.norm(tape, b, &self.enc_norm, x)?;
        Ok(EncoderOutput { h, mask: valid })
    }

    fn decode_prefix(&self, tape: &mut Tape<S>, b: &Binding, ctx: &EncoderOutput, ids: &[usize]) -> Result<Var> {
        let t = ids.len();
        if t == 0 || t > self.config.max_tgt_len {
            return Err(Error::Contract(format!(
                "target length {t} outside 1..={}",
                self.config.max_tgt_len
            )));
        }
        let (ctx_rows, ctx_cols) = {
            let v = tape.value(ctx.h);
            (v.rows(), v.cols())
        };
        if ctx_rows != ctx.mask.len() || ctx_cols != self.config.d_model {
            return Err(Error::shape(
                "decoder context",
                &[ctx_rows, ctx_cols],
                &[ctx.mask.len(), self.config.d_model],
            ));
        }
        let valid: Vec<bool> = ids.iter().map(|&id| id != PAD).collect();
        let self_mask = causal_mask(t, &valid);
        let cross_mask = key_mask(t, &ctx.mask);
        let mut y = self.embed(tape, b, ids, self.dec_pos)?;
        for layer in &self.decoder {
            let h = self.norm(tape, b, &layer.norm1, y)?;
            let h = self.attention(tape, b, &layer.self_attn, h, h, &self_mask)?;
            let y1 = tape.add(y, h)?;
            let h = self.norm(tape, b, &layer.norm2, y1)?;
            let h = self.attention(tape, b, &layer.cross_attn, h, ctx.h, &cross_mask)?;
            let y2 = tape.add(y1, h)?;
            let h = self.norm(tape, b, &layer.norm3, y2)?;
            let h = self.ffn(tape, b, &layer.ffn, h)?;
            y = tape.add(y2, h)?;
        }
        let y = self.norm(tape, b, &self.dec_norm, y)?;
        let embed_t = tape.transpose(b.var(self.tok_embed));
        tape.matmul(y, embed_t)
    }

    /// Next-token logits (`len(tgt) × V`) under teacher forcing: row `t`
    /// sees `tgt[..=t]` and all of `ctx`.
    pub fn teacher_forced_logits(
        &self,
        tape: &mut Tape<S>,
        b: &Binding,
        ctx: &EncoderOutput,
        tgt: &TokenSequence,
    ) -> Result<Var> {
        if tgt.ids.first() != Some(&BOS) {
            return Err(Error::Contract("target must start with BOS".into()));
        }
        self.decode_prefix(tape, b, ctx, &tgt.ids)
    }

    /// Greedy decoding from `BOS`, appending the arg-max token (smallest id on
    /// ties) until `EOS` or `max_len` tokens (capped at `max_tgt_len`).
    pub fn greedy_decode(
        &self,
        tape: &mut Tape<S>,
        b: &Binding,
        ctx: &EncoderOutput,
        max_len: usize,
    ) -> Result<TokenSequence> {
        if max_len == 0 {
            return Err(Error::Contract("max_len must be at least 1".into()));
        }
        let limit = max_len.min(self.config.max_tgt_len);
        let mut ids = vec![BOS];
        while ids.len() < limit {
            let logits = self.decode_prefix(tape, b, ctx, &ids)?;
            let v = tape.value(logits);
            let last = v.row(v.rows() - 1);
            let mut best = 0;
            for (i, &x) in last.iter().enumerate() {
                if x > last[best] {
                    best = i;
                }
            }
            ids.push(best);
            if best == EOS {
                break;
            }
        }
        Ok(TokenSequence::new(ids))
    }

    /// Encodes `src` and greedily decodes on a fresh, gradient-free tape.
    pub fn summarize(&self, src: &TokenSequence, max_len: usize) -> Result<TokenSequence> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, GradMode::Off);
        let ctx = self.encode(&mut tape, &b, src)?;
        self.greedy_decode(&mut tape, &b, &ctx, max_len)
    }
}

/// The encoder's first-position row (`1 × d_model`), which is `BOS` for
/// framed inputs.
pub fn aggregate<S: Scalar>(tape: &mut Tape<S>, out: &EncoderOutput) -> Result<Var> {
    tape.slice_rows(out.h, 0, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Seq2Seq<f64> {
        let mut c = ModelConfig::desk(20);
        c.d_model = 8;
        c.d_ff = 16;
        c.d_proj = 4;
        c.max_src_len = 12;
        c.max_tgt_len = 8;
        Seq2Seq::new(c, seed).unwrap()
    }

    fn seq(ids: &[usize]) -> TokenSequence {
        TokenSequence::new(ids.to_vec())
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::desk(20);
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(20);
        c.freeze_layers = 3;
        assert!(c.validate().is_err());
        assert!(ModelConfig::full(50_000).validate().is_ok());
    }

    #[test]
    fn encoder_output_shape() {
        let m = Seq2Seq::<f64>::new(ModelConfig::desk(30), 1).unwrap();
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, GradMode::Off);
        let out = m.encode(&mut tape, &b, &seq(&[2, 5, 6, 7, 8, 9, 3])).unwrap();
        assert_eq!(tape.value(out.h).shape(), &[7, 32]);
        let agg = aggregate(&mut tape, &out).unwrap();
        assert_eq!(tape.value(agg).data(), tape.value(out.h).row(0));
    }

    #[test]
    fn over_length_is_contract_error() {
        let m = tiny(0);
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, GradMode::Off);
        assert!(matches!(m.encode(&mut tape, &b, &seq(&[4; 13])), Err(Error::Contract(_))));
        let ctx = m.encode(&mut tape, &b, &seq(&[2, 4, 3])).unwrap();
        assert!(m.teacher_forced_logits(&mut tape, &b, &ctx, &seq(&[2; 9])).is_err());
        assert!(m.teacher_forced_logits(&mut tape, &b, &ctx, &seq(&[5, 3])).is_err());
    }

    #[test]
    fn pad_tail_does_not_leak() {
        let m = tiny(3);
        let rows = |ids: &[usize]| {
            let mut tape = Tape::new();
            let b = m.bind(&mut tape, GradMode::Off);
            let out = m.encode(&mut tape, &b, &seq(ids)).unwrap();
            let v = tape.value(out.h);
            (0..4).map(|i| v.row(i).to_vec()).collect::<Vec<_>>()
        };
        let base = rows(&[2, 7, 8, 3]);
        for tail in [&[2usize, 7, 8, 3, 0][..], &[2, 7, 8, 3, 0, 0, 0], &[2, 7, 8, 3, 0, 0]] {
            let other = rows(tail);
            for (a, b) in base.iter().zip(&other) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn decoder_is_causal_and_uses_context() {
        let m = tiny(4);
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, GradMode::Off);
        let ctx = m.encode(&mut tape, &b, &seq(&[2, 9, 10, 11, 3])).unwrap();
        let a = m.teacher_forced_logits(&mut tape, &b, &ctx, &seq(&[2, 5, 6, 7, 3])).unwrap();
        assert_eq!(tape.value(a).shape(), &[5, 20]);
        let c = m.teacher_forced_logits(&mut tape, &b, &ctx, &seq(&[2, 5, 6, 7, 12])).unwrap();
        for r in 0..4 {
            assert_eq!(tape.value(a).row(r), tape.value(c).row(r));
        }
        assert_ne!(tape.value(a).row(4), tape.value(c).row(4));

        let zeros = tape.constant(Tensor::zeros(&[5, 8]));
        let zero_ctx = EncoderOutput {
            h: zeros,
            mask: vec![true; 5],
        };
        let z = m.teacher_forced_logits(&mut tape, &b, &zero_ctx, &seq(&[2, 5, 6, 7, 3])).unwrap();
        assert_ne!(tape.value(a).data(), tape.value(z).data());
    }

    #[test]
    fn greedy_is_deterministic_and_bounded() {
        let m = tiny(5);
        let src = seq(&[2, 4, 5, 6, 3]);
        let a = m.summarize(&src, 6).unwrap();
        let b = m.summarize(&src, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 6);
        assert_eq!(a.ids[0], BOS);
        if let Some(p) = a.ids.iter().position(|&t| t == EOS) {
            assert_eq!(p, a.len() - 1);
        }
        assert_eq!(m.summarize(&src, 1).unwrap().ids, vec![BOS]);
    }

    #[test]
    fn freezing_partitions() {
        let mut m = tiny(6);
        m.set_frozen(0).unwrap();
        assert!(m.params.iter().all(|(_, p)| !p.frozen));
        m.set_frozen(2).unwrap();
        for i in 0..2 {
            assert!(m.encoder_layer_params(i).iter().all(|&id| m.params.get(id).frozen));
        }
        assert!(m.params.iter().filter(|(_, p)| p.name.starts_with("decoder.")).all(|(_, p)| !p.frozen));
        m.set_frozen(1).unwrap();
        assert!(m.encoder_layer_params(1).iter().all(|&id| !m.params.get(id).frozen));
        assert!(m.embedding_params().iter().all(|&id| m.params.get(id).frozen));
        assert!(matches!(m.set_frozen(3), Err(Error::Contract(_))));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = tiny(9).params.to_checkpoint_bytes();
        assert_eq!(a, tiny(9).params.to_checkpoint_bytes());
        assert_ne!(a, tiny(10).params.to_checkpoint_bytes());
    }

    #[test]
    fn runs_in_single_precision() {
        let mut c = ModelConfig::desk(20);
        c.d_model = 8;
        c.d_ff = 8;
        c.d_proj = 4;
        let m = Seq2Seq::<f32>::new(c, 1).unwrap();
        let out = m.summarize(&seq(&[2, 4, 5, 3]), 5).unwrap();
        assert!(out.len() <= 5);
    }
}
