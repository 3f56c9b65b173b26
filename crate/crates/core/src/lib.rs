//! Stable measurement of training dynamics.
//!
//! Two noise sources make checkpoint evaluations jumpy: transient parameter
//! configurations along the training trajectory, and sampling randomness in
//! generative scoring. This crate attacks both — sliding-window checkpoint
//! merging (element-wise weight averaging) on the parameter side, and the
//! unbiased Pass@k estimator on the measurement side — and ships the
//! instruments to verify the gain: trajectory rank correlation, pairwise
//! ranking reversal rate, exact Binomial enumeration oracles, seeded Monte
//! Carlo validators, and a sampling-budget cost model.

pub mod cost;
pub mod error;
pub mod eval_log;
pub mod merge;
pub mod noise_lab;
pub mod passk;
pub mod stability;
pub mod tensor_store;

pub use error::{Error, Result};
