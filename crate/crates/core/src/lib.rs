//! Radial-kernel spectral analysis and clustering of high-dimensional
//! Gaussian mixtures.
//!
//! The crate is organised bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`linalg`] | symmetric eigensolver, power iteration, spectral soft threshold |
//! | [`model`] | Gaussian mixtures, seeded sampling, sphere projection |
//! | [`kernels`] | radial kernel profiles, kernel matrices, smoothness diagnostics |
//! | [`gram`] | component Gram matrices in the kernel distance, separation statistic |
//! | [`structure`] | block approximants, residual norms, eigenvalue counts, principal angles |
//! | [`cluster`] | k-means, kernel PCA clustering, covariance clustering, scoring |
//!
//! Kernel matrices are normalised by the sample size: entry `(i, j)` is
//! `h(‖xᵢ - xⱼ‖) / N`. Samples of one mixture component always occupy a
//! contiguous block of indices.

pub mod cluster;
pub mod error;
pub mod gram;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod structure;

pub use error::{Error, Result};
