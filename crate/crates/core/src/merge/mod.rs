//! Post-hoc merging of latent clusters into cell populations.

mod agglomerate;
pub mod dip;
mod gaussian;
mod weights;

pub use agglomerate::{agglomerate, merge_clusters, replay, MergeConfig, MergeCriterion, MergeResult, MergeStep, ProjectionTest};
pub use dip::{dip_oracle, dip_statistic, dip_test, effective_size, weighted_dip, DipNull, DipTest};
pub use gaussian::{bhattacharyya, fisher_coordinate, gaussian_approx, FisherCovariance, GaussianSummary};
pub use weights::{population_quantiles, soft_cluster_weights, weighted_quantile, PopulationQuantiles, SoftWeights, QUANTILE_LEVELS};
