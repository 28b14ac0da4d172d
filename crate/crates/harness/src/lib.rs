//! Experiment driver for `ldpr-core`: configuration, synthetic data, the
//! rolling-window comparison and the `ldpr` command line.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod synth;

// The guide's code blocks run as doc-tests so they cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/univariate.md")]
    mod univariate {}
    #[doc = include_str!("../../../book/src/bivariate.md")]
    mod bivariate {}
    #[doc = include_str!("../../../book/src/ranking.md")]
    mod ranking {}
    #[doc = include_str!("../../../book/src/reordering.md")]
    mod reordering {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
