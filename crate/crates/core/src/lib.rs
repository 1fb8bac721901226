//! Bayesian hierarchical Gaussian mixture model for grouped multivariate
//! samples such as flow cytometry data.
//!
//! The crate covers the model itself ([`model`]), seeded random variates
//! ([`dist`]), the MCMC sampler ([`mcmc`]), post-hoc cluster merging
//! ([`merge`]), downstream analysis ([`analysis`]) and file handling ([`io`]).

pub mod analysis;
pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod merge;
pub mod mcmc;
pub mod model;
pub(crate) mod serde_util;

pub use error::{Error, Result};
