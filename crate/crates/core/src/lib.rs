//! Sequence-level knowledge distillation under f-divergences, at desk scale.
//!
//! Teachers and students are tabular autoregressive models over a small
//! vocabulary with a fixed horizon, so every sequence-level quantity can be
//! computed exactly by enumeration and compared against the step-wise
//! training losses.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`divergence`] | KL, reverse KL, Jensen-Shannon and total variation between categoricals |
//! | [`model`] | tabular order-k models, sampling, enumeration, beam search |
//! | [`decompose`] | brute-force oracles, exact step-wise sums, Monte Carlo losses |
//! | [`distill`] | analytic gradients, optimizers, offline caches, the training loop |
//! | [`metrics`] | likelihood risk, coverage risk, distinct-n |
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled; IO and the command line live in the companion `fdistill` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod decompose;
pub mod distill;
pub mod divergence;
mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod seed;

pub use decompose::{JsConditionalMode, ObjectiveValue};
pub use distill::{LossReport, Objective, TeacherSampleCache, TrainConfig};
pub use divergence::{DivergenceKind, ProbVector};
pub use error::{Error, Result};
pub use metrics::RiskReport;
pub use model::{Sequence, TabularARModel, Vocab};
