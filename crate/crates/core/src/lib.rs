//! Sentence-pair similarity and classification with fused multi-embedding
//! word representations, a max-pooling + LSTM sentence encoder and
//! word/sentence/word-sentence comparison features.

pub mod cli;
pub mod comparison;
pub mod config;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod evaldata;
pub mod model;
pub mod numcore;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
