//! Transformer seq2seq summarization trained jointly with an NT-Xent
//! contrastive objective over sentence-level document augmentations, plus
//! ROUGE scoring, robustness slicing and ablation grids.
//!
//! Numeric code is generic over [`numeric::Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type.

pub mod augment;
pub mod cli;
pub mod config;
pub mod contrastive;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};

pub type Tensor64 = numeric::Tensor<f64>;
pub type Tensor32 = numeric::Tensor<f32>;
pub type Tape64 = numeric::Tape<f64>;
pub type Tape32 = numeric::Tape<f32>;
pub type ParamStore64 = numeric::ParamStore<f64>;
pub type ParamStore32 = numeric::ParamStore<f32>;
pub type Adam64 = numeric::AdamState<f64>;
pub type Adam32 = numeric::AdamState<f32>;
pub type Model64 = model::Seq2Seq<f64>;
pub type Model32 = model::Seq2Seq<f32>;
