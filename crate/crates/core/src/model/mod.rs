//! Domain types and log densities of the hierarchical mixture.

mod data;
mod density;
mod prior;
mod state;

pub use data::{CellMatrix, Dataset};
pub use density::{
    log_dirichlet, log_gaussian, log_inverse_wishart, log_mixture_density, log_nu_prior, log_prior, log_sum_exp,
    log_wishart, GaussianFactor,
};
pub use prior::{ClusterPrior, PriorSpec};
pub use state::{ChainState, LatentState, SampleState};

#[cfg(test)]
pub(crate) use density::tests as density_tests;
