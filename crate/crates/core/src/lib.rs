//! Descriptor registry, templated sentence dataset, and bias measurements
//! computed from externally produced model scores.
//!
//! Scores (perplexities, style vectors, offensiveness) arrive as JSONL files;
//! [`harness`] holds their schemas and deterministic mock scorers.

pub mod compiler;
pub mod error;
pub mod generation;
pub mod harness;
pub mod index;
pub mod jsonl;
pub mod likelihood;
pub mod mitigation;
pub mod offense;
pub mod registry;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/generation-bias.md")]
    mod generation_bias {}
    #[doc = include_str!("../../../book/src/bias-tagging.md")]
    mod bias_tagging {}
    #[doc = include_str!("../../../book/src/offensiveness.md")]
    mod offensiveness {}
    #[doc = include_str!("../../../book/src/mock-scorers.md")]
    mod mock_scorers {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
