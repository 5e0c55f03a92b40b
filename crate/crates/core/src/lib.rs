//! Mode choice modelling toolkit.
//!
//! Logit-family estimation (multinomial logit and panel mixed logit by
//! simulated maximum likelihood on Halton draws), from-scratch classifiers
//! (CART, bagging, random forest, gradient boosting, naive Bayes, a
//! single-hidden-layer network), a paired k-fold evaluation harness and an
//! interpretation suite that treats every model as a probability emitter.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `modechoice` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod par;
mod prelude;

pub mod classifiers;
pub mod dataset;
pub mod eval;
pub mod interpret;
pub mod linalg;
pub mod logit;
pub mod models;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod trees;

pub use error::{Error, Result};
