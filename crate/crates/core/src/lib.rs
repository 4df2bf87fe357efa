//! Dependent heavy-tailed random vectors: marginal and counting laws,
//! copulas, class diagnostics, convolution oracles, seeded Monte Carlo,
//! tail-ratio experiments and discrete/arrival risk models.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asym;
pub mod classdiag;
pub mod conv;
pub mod copulas;
pub mod dists;
pub mod error;
pub mod mc;
pub mod quad;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
