//! Named parameter tensors, their gradients, and the checkpoint file.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "CSEQCKPT"
//! version   u32      1
//! count     u32      number of tensors
//! per tensor, in registration order:
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims u64 × rank
//!   payload  f64 × product(dims), row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Stream;

use super::{Gradients, Scalar, Tape, Tensor, Var};

const MAGIC: &[u8; 8] = b"CSEQCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Option<Vec<S>>,
    pub frozen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    params: Vec<Param<S>>,
    by_name: BTreeMap<String, usize>,
}

/// Which bound parameters require gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Inference: nothing requires a gradient.
    Off,
    /// Training: every parameter that is not frozen.
    Trainable,
    /// Gradient checks: every parameter, frozen or not.
    All,
}

impl GradMode {
    fn wants(self, frozen: bool) -> bool {
        match self {
            GradMode::Off => false,
            GradMode::Trainable => !frozen,
            GradMode::All => true,
        }
    }
}

/// Tape handles for every parameter of a store, in id order.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
    mode: GradMode,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("parameter {name} registered twice")));
        }
        self.by_name.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            grad: None,
            frozen: false,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Registers a tensor drawn uniformly from `[-scale, scale)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut Stream,
    ) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| S::lit(rng.uniform(-scale, scale))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<S>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<S> {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<S>, mode: GradMode) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), mode.wants(p.frozen)))
            .collect();
        Binding { vars, mode }
    }

    /// Adds the gradients of bound, gradient-requiring parameters into their
    /// `grad` buffers. Parameters the loss did not reach get a zero buffer.
    pub fn accumulate(&mut self, grads: &Gradients<S>, binding: &Binding) {
        for (p, &var) in self.params.iter_mut().zip(&binding.vars) {
            if !binding.mode.wants(p.frozen) {
                continue;
            }
            let n = p.value.len();
            let buf = p.grad.get_or_insert_with(|| vec![S::zero(); n]);
            if let Some(g) = grads.get(var) {
                buf.iter_mut().zip(g).for_each(|(b, &x)| *b += x);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn grad_norm(&self) -> S {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|&x| x * x)
            .sum::<S>()
            .sqrt()
    }

    /// Rescales trainable gradients so their global L2 norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: S) -> S {
        let norm = self.grad_norm();
        if norm > max_norm && norm > S::zero() {
            let factor = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| !p.frozen) {
                if let Some(g) = p.grad.as_mut() {
                    g.iter_mut().for_each(|x| *x *= factor);
                }
            }
        }
        norm
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in p.value.data() {
                out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
            }
        }
        out
    }

    /// Overwrites parameter values from checkpoint bytes. Names, order and
    /// shapes must match this store exactly.
    pub fn load_checkpoint_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        if count != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {count} tensors, model expects {}",
                self.params.len()
            )));
        }
        let mut loaded = Vec::with_capacity(count);
        for p in &self.params {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if name != p.name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {}, found {name}",
                    p.name
                )));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            if shape != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {shape:?}, model expects {:?}",
                    p.value.shape()
                )));
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(S::lit(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))));
            }
            loaded.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        for (p, v) in self.params.iter_mut().zip(loaded) {
            p.value = v;
            p.grad = None;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.load_checkpoint_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
