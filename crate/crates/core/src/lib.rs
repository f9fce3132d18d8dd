//! Synthetic post-OCR noise: corpus preparation, glyph-similarity driven
//! character corruption, error models learned from real OCR output, rendered
//! OCR round trips, and CER/WER evaluation.

pub mod align;
pub mod atlas;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod error_model;
pub mod features;
pub mod imaging;
pub mod inject;
pub mod manifest;
pub mod metrics;
pub mod ocr;
mod parallel;
pub mod seed;
pub mod similarity;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/random-noise.md")]
    mod random_noise {}
    #[doc = include_str!("../../../book/src/glyph-similarity.md")]
    mod glyph_similarity {}
    #[doc = include_str!("../../../book/src/error-model.md")]
    mod error_model {}
    #[doc = include_str!("../../../book/src/ocr-round-trip.md")]
    mod ocr_round_trip {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/determinism.md")]
    mod determinism {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
