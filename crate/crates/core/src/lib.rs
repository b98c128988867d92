//! Image difference captioning with a frozen language model.
//!
//! The pipeline encodes an image pair with a frozen encoder, projects both
//! feature maps through a single trainable linear layer, fuses them into a
//! soft prompt, and feeds the prompt to a frozen causal language model that
//! generates a change summary. Only the projection layer trains. Evaluation
//! covers BLEU-4, CIDEr-D, METEOR-lite, ROUGE-L and sentence-embedding
//! cosine similarity, with correspondence-threshold subset reporting.

pub mod adapters;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod image_io;
pub mod lm;
pub mod metrics;
pub mod rng;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
