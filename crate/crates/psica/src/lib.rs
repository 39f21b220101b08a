//! PSICA: probabilistic subgroup identification for categorical treatments.
//!
//! Given randomized-trial data with two or more treatment arms, this crate
//! estimates, for every subject, the probability that each treatment is the
//! best one, and summarizes those probabilities in a binary decision tree.
//! Each tree node carries aggregated best-treatment probabilities, the sets
//! of useless and potential treatments at a chosen risk level, and the
//! renormalized (truncated) probabilities over the potential set.
//!
//! The pipeline has two stages:
//!
//! 1. [`bestprob`] fits one regression random forest per treatment arm
//!    ([`forest`]) and turns per-arm effect predictions into a row-wise
//!    best-treatment probability matrix, either by refitting forests on
//!    bootstrap resamples or by sampling Gaussians whose variances come
//!    from the bias-corrected infinitesimal jackknife.
//! 2. [`psicatree`] grows a loss-driven decision tree over the probability
//!    matrix, optionally prepruned by a chi-square test on child
//!    probability distributions, and labels every node.
//!
//! [`evalsim`] contains the synthetic benchmark models and metrics used to
//! validate the method, and [`cli`] the command-line front end.

pub mod bestprob;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evalsim;
pub mod forest;
pub mod psicatree;

pub mod rng;
pub mod stats;

pub use error::{Error, Result};
