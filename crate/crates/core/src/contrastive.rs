//! Projection head and the NT-Xent contrastive loss.
//!
//! A batch of `K` source documents yields `2K` projected views stacked as the
//! rows of `Z`; rows `2m` and `2m + 1` (0-based) come from document `m`. For
//! row `i` with partner `j`,
//!
//! ```text
//! l(i, j) = -log( exp(sim(z_i, z_j) / τ) / Σ_{k ≠ i} exp(sim(z_i, z_k) / τ) )
//! ```
//!
//! and the batch loss is the mean of `l(i, partner(i))` over all `2K` rows.
//! `sim` is cosine similarity with each norm clamped below at
//! [`NORM_EPS`].

use crate::error::{Error, Result};
use crate::numeric::{Binding, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::rng::Stream;

pub const NORM_EPS: f64 = 1e-12;

/// Two-layer MLP `z = W₂ relu(W₁ h + b₁) + b₂` from `d_model` to `d_proj`.
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub d_model: usize,
    pub d_proj: usize,
}

impl ProjectionHead {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        d_model: usize,
        d_proj: usize,
        init_scale: f64,
        rng: &mut Stream,
    ) -> Result<Self> {
        if d_proj < 2 {
            return Err(Error::Validation(format!(
                "projection dimension must be at least 2, got {d_proj}"
            )));
        }
        let w1 = store.add_uniform("head.w1", &[d_model, d_model], init_scale, rng)?;
        let b1 = store.add("head.b1", Tensor::zeros(&[d_model]))?;
        let w2 = store.add_uniform("head.w2", &[d_model, d_proj], init_scale, rng)?;
        let b2 = store.add("head.b2", Tensor::zeros(&[d_proj]))?;
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            d_model,
            d_proj,
        })
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Projects each row of `h` (`n × d_model`) to `n × d_proj`.
    pub fn project<S: Scalar>(&self, tape: &mut Tape<S>, b: &Binding, h: Var) -> Result<Var> {
        let x = tape.matmul(h, b.var(self.w1))?;
        let x = tape.add_row(x, b.var(self.b1))?;
        let x = tape.relu(x);
        let x = tape.matmul(x, b.var(self.w2))?;
        tape.add_row(x, b.var(self.b2))
    }
}

/// `a·b / (max(‖a‖, ε) · max(‖b‖, ε))`.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let eps = S::lit(NORM_EPS);
    let dot = a.iter().zip(b).map(|(&x, &y)| x * y).sum::<S>();
    let na = a.iter().map(|&x| x * x).sum::<S>().sqrt().max(eps);
    let nb = b.iter().map(|&x| x * x).sum::<S>().sqrt().max(eps);
    dot / (na * nb)
}

fn check_batch(rows: usize, tau: f64) -> Result<()> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    if rows < 2 || !rows.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "view batch needs an even number (>= 2) of rows, got {rows}"
        )));
    }
    Ok(())
}

/// Index of the positive partner of row `i`.
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// `l(i, j)` for rows of a projected view batch `z` (`2K × d_proj`),
/// evaluated directly without a tape.
pub fn ntxent_pair<S: Scalar>(i: usize, j: usize, z: &Tensor<S>, tau: f64) -> Result<S> {
    let n = z.rows();
    check_batch(n, tau)?;
    if i == j || i >= n || j >= n {
        return Err(Error::Contract(format!(
            "pair ({i}, {j}) invalid for a batch of {n} views"
        )));
    }
    let t = S::lit(tau);
    let logits: Vec<(usize, S)> = (0..n)
        .filter(|&k| k != i)
        .map(|k| (k, cosine(z.row(i), z.row(k)) / t))
        .collect();
    let max = logits.iter().map(|&(_, x)| x).fold(S::neg_infinity(), S::max);
    let lse = max + logits.iter().map(|&(_, x)| (x - max).exp()).sum::<S>().ln();
    let pos = logits.iter().find(|&&(k, _)| k == j).expect("j != i").1;
    Ok(lse - pos)
}

/// Differentiable batch loss over the rows of `z`.
pub fn contrastive_loss<S: Scalar>(tape: &mut Tape<S>, z: Var, tau: f64) -> Result<Var> {
    let n = tape.value(z).rows();
    check_batch(n, tau)?;
    let zn = tape.normalize_rows(z, S::lit(NORM_EPS));
    let znt = tape.transpose(zn);
    let sim = tape.matmul(zn, znt)?;
    let logits = tape.scale(sim, S::lit(1.0 / tau));
    let mask: Vec<bool> = (0..n * n).map(|f| f / n != f % n).collect();
    let log_probs = tape.log_softmax_masked(logits, Some(mask))?;
    let picks: Vec<usize> = (0..n).map(|i| i * n + partner(i)).collect();
    let positives = tape.gather(log_probs, &picks)?;
    let mean = tape.mean(positives);
    Ok(tape.scale(mean, -S::one()))
}

/// Evaluates [`contrastive_loss`] on a constant batch.
pub fn contrastive_loss_value<S: Scalar>(z: &Tensor<S>, tau: f64) -> Result<S> {
    let mut tape = Tape::new();
    let v = tape.constant(z.clone());
    let loss = contrastive_loss(&mut tape, v, tau)?;
    Ok(tape.value(loss).data()[0])
}
