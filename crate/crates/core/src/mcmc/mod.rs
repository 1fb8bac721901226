//! Posterior sampling: Gibbs sweeps, the Metropolis step for `ν`,
//! reversible-jump activation moves and trace recording.

mod activation;
mod chain;
mod config;
mod forward;
pub mod trace_io;
mod updates;

pub use activation::{birth_terms, death_terms, update_activation, RjTerms};
pub use chain::{
    draw_predictive_cell, label_swaps, run_chain, run_chain_from, Diagnostics, PredictiveDraw, SampleDraw, Sampler,
    Trace, TraceDraw,
};
pub use config::{McmcConfig, Mutation, PredictiveConfig, LATENT_STREAM, PREDICTIVE_STREAM, SAMPLE_STREAM_OFFSET};
pub use forward::{draw_activation_prior, draw_cells, draw_nu_prior, draw_prior_state};
pub use updates::{
    mu_conditional, nu_log_ratio, pi_conditional, psi_conditional, reflect_nu, sigma_conditional,
    sigma_theta_conditional, theta_conditional, update_assignments, update_component_params, update_latent_layer,
    update_nu, update_pi, AssignmentStats, LatentDiagnostics, SampleDiagnostics, SuffStats,
};
