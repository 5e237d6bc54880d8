//! Bayesian nonparametric mixture and latent factor models.
//!
//! * [`crp`]: Chinese restaurant process partitions.
//! * [`finite`]: finite Dirichlet-multinomial Gaussian mixtures and their
//!   exact enumeration.
//! * [`dp_gibbs`]: collapsed Gibbs sampling for CRP mixtures.
//! * [`dp_vi`]: truncated stick-breaking variational inference.
//! * [`measures`]: stick-breaking Dirichlet / beta process draws.
//! * [`ibp`]: Indian buffet process and the spike-and-slab factor model.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crp;
pub mod dp_gibbs;
pub mod dp_vi;
pub mod error;
pub mod finite;
pub mod ibp;
pub mod measures;
pub mod stats;

pub use error::{BnpError, Result};
