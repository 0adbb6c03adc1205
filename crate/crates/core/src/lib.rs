//! Generative-enhanced optimization with matrix product states, applied to the
//! generalized multi-knapsack problem (every object goes into exactly one knapsack).
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense tensors, contraction, truncated SVD and QR.
//! - [`mps`]: matrix product states, canonical forms, amplitudes and norms.
//! - [`symmetric`]: U(1) charge bookkeeping, the assignment-constraint state and
//!   block-wise SVD.
//! - [`dmrg`]: two-site gradient training against the weighted NLL loss.
//! - [`sampling`]: exact autoregressive sampling.
//! - [`knapsack`]: instances, encodings, costs, generation and a brute-force oracle.
//! - [`geo`]: the outer generate-select-train-sample loop and its metrics.
//! - [`baselines`]: random search and ensemble simulated annealing.

pub mod baselines;
pub mod dmrg;
pub mod error;
pub mod geo;
pub mod knapsack;
pub mod mps;
pub mod sampling;
pub mod symmetric;
pub mod tensor;

pub use error::{Error, Result};
