//! Anchored top-two best-arm identification.
//!
//! * [`spef`]: single-parameter exponential families and bandit instances.
//! * [`anchor_index`]: anchor function, transportation-cost indexes, empirical statistics.
//! * [`oracle`]: optimal proportions and characteristic time.
//! * [`samplers`]: AT2, IAT2 and beta-EB top-two policies with GLLR stopping.
//! * [`fluid`]: the idealized fluid dynamics of the samplers.
//! * [`harness`]: configuration, Monte Carlo benchmarking and trajectory capture.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod anchor_index;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod oracle;
pub mod rng;
pub mod samplers;
mod root;
pub mod spef;

pub use error::{BaiError, Result};
