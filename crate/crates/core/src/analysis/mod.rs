//! Posterior summaries, synthetic data, population sizes, PCA, the EM
//! baseline and the sampler-correctness harness.

mod em;
mod generate;
mod geweke;
mod populations;
mod summary;

pub use em::{em_baseline, EmConfig, EmFit};
pub use generate::{generate_synthetic, informative_prior, GeneratorCluster, GeneratorSpec, GroundTruth, SampleTruth};
pub use geweke::{batch_means_se, geweke_prior, getting_it_right, FunctionalReport, GewekeConfig, GewekeReport};
pub use populations::{pca_biplot, population_sizes, Pca, PopulationSizes};
pub use summary::{
    effective_sample_size, empirical_quantile, recovery_table, summarize, Interval, LatentSummary, PosteriorSummary,
    RecoveryRow, RecoveryTable, SampleSummary, SummaryRow, INTERVAL_LEVELS,
};
