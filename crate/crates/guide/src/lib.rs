//! The book under `book/`, compiled so that `cargo test` runs every snippet.
//!
//! mdbook cannot link snippets against workspace crates, so each chapter is
//! pulled in as the documentation of an empty module and checked as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/embeddings.md")]
pub mod embeddings {}
#[doc = include_str!("../../../book/src/encoder.md")]
pub mod encoder {}
#[doc = include_str!("../../../book/src/decoder.md")]
pub mod decoder {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/explanations.md")]
pub mod explanations {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
