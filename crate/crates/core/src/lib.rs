//! Latent-space GAN data augmentation for low-resource translation corpora.
//!
//! The pipeline has three stages:
//!
//! 1. [`seq2seq`]: a bidirectional-LSTM encoder / repeat-vector LSTM decoder
//!    trained on a small parallel corpus.
//! 2. [`gan`]: a generator that maps uniform noise to encoder-like latent
//!    vectors, trained against a discriminator while the encoder is frozen.
//! 3. [`augment`]: generator outputs decoded into a synthetic monolingual
//!    corpus, annotated and filtered by heuristic quality labels.
//!
//! Everything is built on the small tape-based engine in [`graph`] and
//! [`tensor`].

pub mod augment;
pub mod checkpoint;
pub mod error;
pub mod gan;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod quality;
pub mod rng;
pub mod seq2seq;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use rng::RngStream;
pub use tensor::{Scalar, Tensor};
