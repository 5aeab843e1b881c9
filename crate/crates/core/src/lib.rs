//! Dimension-transferable models.
//!
//! The crate is organised around *consistent sequences*: families of spaces
//! (sets, graph signals, point clouds) of every size `n`, linked by embeddings
//! that identify a small object with equivalent larger ones. Models that
//! commute with those embeddings extend to a limit space, and the harness in
//! this crate measures how fast their outputs converge as `n` grows.
//!
//! Module map:
//! - [`tensor`]: dense matrices, SVD, assignment, spectral norm, seeded RNG.
//! - [`consistent`]: sized objects, embeddings, group actions, compatible norms
//!   and randomized compatibility/equivariance checks.
//! - [`metrics`]: Wasserstein, cut norm, Hausdorff and Gromov–Wasserstein TLB.
//! - [`models`]: the nine any-dimensional architectures with reverse-mode
//!   gradients over a flat parameter store.
//! - [`harness`]: samplers for limit objects, transfer runs and rate fits.
//! - [`experiments`]: size-generalization tasks, training and evaluation.
//! - [`cli`]: the `dimlift` command-line front end.

pub mod cli;
pub mod consistent;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, RngStream};
