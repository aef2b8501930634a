//! Runs the code blocks of the guide in `book/` as doctests.
//!
//! mdbook cannot run snippets that depend on external crates, so every
//! chapter is pulled in here as module documentation and `cargo test --doc`
//! checks it. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/tables.md")]
pub mod tables {}
#[doc = include_str!("../../../book/src/disproportionality.md")]
pub mod disproportionality {}
#[doc = include_str!("../../../book/src/likelihood-ratio.md")]
pub mod likelihood_ratio {}
#[doc = include_str!("../../../book/src/empirical-bayes.md")]
pub mod empirical_bayes {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
