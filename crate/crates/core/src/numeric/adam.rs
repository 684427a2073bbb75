use crate::error::{Error, Result};

use super::{ParamStore, Scalar};

/// Adam with bias correction. Moment buffers are allocated lazily per
/// parameter on the first step that touches it.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    t: u64,
    m: Vec<Option<Vec<S>>>,
    v: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(lr: S) -> Self {
        Self {
            lr,
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            eps: S::lit(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every non-frozen parameter from its gradient, then clears all
    /// gradients. A trainable parameter without a gradient is an error and
    /// leaves the store untouched.
    pub fn step(&mut self, params: &mut ParamStore<S>) -> Result<()> {
        if let Some((_, p)) = params.iter().find(|(_, p)| !p.frozen && p.grad.is_none()) {
            return Err(Error::Contract(format!(
                "parameter {} has no gradient; run backward before adam_step",
                p.name
            )));
        }
        self.m.resize(params.len(), None);
        self.v.resize(params.len(), None);
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let p = params.get_mut(id);
            let grad = p.grad.take();
            if p.frozen {
                continue;
            }
            let grad = grad.expect("checked above");
            let n = grad.len();
            let m = self.m[id.index()].get_or_insert_with(|| vec![S::zero(); n]);
            let v = self.v[id.index()].get_or_insert_with(|| vec![S::zero(); n]);
            for (((x, &g), mi), vi) in p.value.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (S::one() - self.beta1) * g;
                *vi = self.beta2 * *vi + (S::one() - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
        Ok(())
    }
}

pub fn adam_step<S: Scalar>(params: &mut ParamStore<S>, state: &mut AdamState<S>) -> Result<()> {
    state.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{GradMode, ParamId, Tape, Tensor};

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(vec![x])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        s.get_mut(ParamId(0)).grad = Some(vec![0.0]);
        AdamState::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.value(ParamId(0)).data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -20.0] {
            let mut s = scalar_store(1.0);
            s.get_mut(ParamId(0)).grad = Some(vec![g]);
            AdamState::new(0.01).step(&mut s).unwrap();
            let delta = s.value(ParamId(0)).data()[0] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut s = scalar_store(1.0);
        let mut adam = AdamState::new(0.1);
        assert!(matches!(adam.step(&mut s), Err(Error::Contract(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn grads_cleared_after_step() {
        let mut s = scalar_store(1.0);
        s.get_mut(ParamId(0)).grad = Some(vec![1.0]);
        let mut adam = AdamState::new(0.1);
        adam.step(&mut s).unwrap();
        assert!(s.get(ParamId(0)).grad.is_none());
    }

    #[test]
    fn frozen_params_skip_updates() {
        let mut s = scalar_store(1.0);
        s.set_frozen(ParamId(0), true);
        AdamState::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.value(ParamId(0)).data(), &[1.0]);
    }

    #[test]
    fn minimizes_square_through_tape() {
        let mut s = scalar_store(1.0);
        let mut adam = AdamState::new(0.1);
        let mut last = 1.0f64;
        for _ in 0..3 {
            let mut tape = Tape::new();
            let b = s.bind(&mut tape, GradMode::Trainable);
            let x = b.var(ParamId(0));
            let sq = tape.mul(x, x).unwrap();
            let loss = tape.sum(sq);
            let g = tape.backward(loss).unwrap();
            s.accumulate(&g, &b);
            adam.step(&mut s).unwrap();
            let now = s.value(ParamId(0)).data()[0].abs();
            assert!(now < last);
            last = now;
        }
    }
}
