//! Exceedance clusters of heavy-tailed Markov chains with a regenerative atom.
//!
//! The crate simulates chains `X_{n+1} = Z X_n + phi(X_n, W)` that regenerate
//! from a law `H` whenever they enter the atom `[0, a_max]`, splits paths into
//! cycles, builds exceedance point processes, samples the cluster Poisson
//! limit, and evaluates the tail-chain constants `c` and `theta`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod cycles;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod measure_oracle;
pub mod point_process;
pub mod rng;
pub mod stats;
pub mod tail_chain;

pub use error::{Error, Result};
