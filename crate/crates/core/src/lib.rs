//! Policy gradient guided by lazy Monte-Carlo tree search for history-based
//! decision processes, with baselines, benchmark environments and an
//! experiment harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod hdp;
pub mod mcts;
pub mod mixture;
pub mod numerics;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
