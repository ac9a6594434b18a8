//! GraphNet: sparse, graph-structured penalized regression and classification.
//!
//! The crate solves problems of the form
//!
//! ```text
//! risk(y, Xβ) + (λ1/2) Σ w_j |β_j| + (λG/2) βᵀ G β
//! ```
//!
//! where `G` is a positive semidefinite penalty graph (usually a lattice
//! Laplacian shifted by a multiple of the identity) and the risk is squared
//! error, Huber, or the huberized hinge. All variants share one active-set
//! coordinate-descent engine ([`solver`]); robust and support-vector variants
//! are solved as quadratic problems in an augmented set of variables.
//!
//! Module map:
//!
//! - [`tensor_io`]: design matrices, file formats, synthetic lattice data
//! - [`graph`]: lattice adjacency, Laplacians, diagonal shifts, augmentation
//! - [`losses`]: scalar kernels and full objective evaluation
//! - [`solver`]: coordinate descent, regularization paths, adaptive reweighting
//! - [`classify`]: optimal scoring (SPDA) and class-balanced resampling
//! - [`modelsel`]: degrees of freedom, AIC/BIC, grouped CV, exact binomial tests
//! - [`verify`]: slow independent reference solvers used by tests and `graphnet verify`

pub mod classify;
pub mod error;
pub mod graph;
pub mod losses;
pub mod modelsel;
pub mod par;
pub mod solver;
pub mod tensor_io;
pub mod verify;

pub use error::{Error, Result};
