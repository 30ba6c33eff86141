//! Desk-scale laboratory for group-relative policy optimization with reward
//! dithering.
//!
//! Tabular softmax policies are trained with a GRPO-style clipped surrogate
//! against discrete rule-based rewards, optionally perturbed by independent
//! zero-mean noise before advantages are computed. Every expectation involved
//! can be computed exactly, so the effect of the noise on gradient health,
//! convergence time and reward statistics can be measured without estimator
//! noise getting in the way.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod policy;
pub mod rewards;
pub mod seed;

pub use error::{Error, Result};
