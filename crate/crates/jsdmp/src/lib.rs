//! Message passing for node classification where each edge is weighted by a
//! learned mix of feature similarity and Jensen-Shannon divergence.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`], [`autodiff`]: dense `f64` matrices and a reverse-mode tape.
//! - [`graph`]: sparse symmetric graphs in CSR form with self-loops.
//! - [`layers`]: per-edge similarity, divergence, and weight computation.
//! - [`models`]: the two architectures, `DMPGCN` and `DMPPRG`.
//! - [`adam`], [`training`], [`metrics`]: the optimization loop and scoring.
//! - [`data`]: TSV datasets, split policies, and a synthetic generator.
//! - [`checkpoint`], [`cli`]: persistence and the command-line front end.
//!
//! The `examples/` directory has a runnable walkthrough of each capability;
//! the `jsdmp` binary wraps the same APIs behind subcommands.

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
