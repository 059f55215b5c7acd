//! Learning Whittle indices for restless bandits with policy-gradient
//! training, exact dynamic-programming oracles, and the scheduling
//! baselines used to judge them.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod arms;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
