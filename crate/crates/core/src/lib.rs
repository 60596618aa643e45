//! Implicit-feedback recommendation with corrected and weighted softmax
//! losses.
//!
//! The crate covers the whole pipeline: interaction ingestion and k-core
//! preprocessing ([`data`]), embedding backbones ([`backbones`]), batch
//! sampling and class priors ([`sampling`]), objectives with analytic
//! gradients ([`losses`]), sparse Adam and the training loop ([`optim`]),
//! Top-K evaluation ([`eval`]) and the experiment runner behind the `cwrec`
//! binary ([`cli`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbones;
pub mod cli;
pub mod data;
mod error;
pub mod eval;
pub mod grad;
pub mod losses;
pub mod optim;
pub mod sampling;
pub mod synthetic;

pub use error::{Entity, Error, Result};
