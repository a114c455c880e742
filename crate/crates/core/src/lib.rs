//! Stacked two-layer LSTM sequence-to-sequence captioning for videos.
//!
//! A video is a sequence of precomputed frame-feature vectors. The first LSTM
//! layer reads the frames, the second layer then emits words conditioned on
//! the first layer's state, one token at a time until `<EOS>`.

pub mod cli;
pub mod data;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lstm;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Result, S2vtError};
