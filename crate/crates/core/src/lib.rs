//! Joint slot filling and intent detection with an SF-ID network.
//!
//! A BLSTM encodes the utterance; attention produces one slot context per
//! token and one intent context per sentence; the SF-ID block lets the two
//! tasks exchange information over a few iterations; a softmax head predicts
//! the intent and a softmax or CRF head predicts the IOB slot tags.
//!
//! Everything is differentiated by the small reverse-mode engine in
//! [`autodiff`]; training is deterministic for a given seed.

// Index loops mirror the math in the numeric kernels and their oracles.
#![allow(clippy::needless_range_loop)]

pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod sfid;
pub mod synthetic;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use sfid::{Ablation, Correlation, Mode, ModeConfig};

/// Guide chapters compiled as doc-tests so their snippets stay in sync.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub struct Autodiff;
    #[doc = include_str!("../../../book/src/data.md")]
    pub struct Data;
    #[doc = include_str!("../../../book/src/encoder-attention.md")]
    pub struct EncoderAttention;
    #[doc = include_str!("../../../book/src/sfid.md")]
    pub struct SfId;
    #[doc = include_str!("../../../book/src/crf.md")]
    pub struct Crf;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
