//! Compositional Gaussian-process kernels, from text to probabilistic program.
//!
//! * [`dsl`]: kernel expressions, their text syntax and plain-English descriptions.
//! * [`algebra`]: rewriting into a sum-of-products normal form.
//! * [`gp`]: Gram matrices, exact posterior, marginal likelihood, BIC, fitting, sampling.
//! * [`search`]: greedy BIC-driven kernel structure search.
//! * [`codegen`]: emission of a complete Stan program for a kernel and a dataset.

pub mod algebra;
pub mod codegen;
pub mod dsl;
pub mod error;
pub mod gp;
pub mod search;

pub use dsl::{describe, parse, render, BaseKernel, BaseKind, KernelExpr};
pub use error::{Error, Result};
pub use gp::TimeSeriesDataset;

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
