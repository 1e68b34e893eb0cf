//! Trajectory-constrained reconstruction for imaging inverse problems.
//!
//! A reconstruction is a backward sequence of states `x_T, …, x_0`. Each
//! step re-fits a small untrained encoder-decoder to the measurements while a
//! quadratic coupling keeps the new state close to the previous one, which
//! makes every step an approximate proximal update. The crate bundles
//!
//! * [`tensor`], [`conv`], [`autograd`], [`optim`]: single/double precision
//!   tensors, reverse-mode differentiation and Adam,
//! * [`operators`]: masking, downsampling, blur and parallel-beam CT models,
//! * [`network`]: the untrained prior,
//! * [`engine`]: schedules, initialization and the trajectory loop,
//! * [`prox`]: closed-form proximal maps that certify the stability bounds,
//! * [`metrics`], [`phantom`], [`tasks`]: PSNR/SSIM, test images and task assembly,
//! * [`io`], [`cli`]: file formats and the `trace` command line.

// `!(x > 0.0)` is the idiom for rejecting NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod cli;
pub mod conv;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod network;
pub mod operators;
pub mod optim;
pub mod phantom;
pub mod prox;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
