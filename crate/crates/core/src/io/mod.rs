//! Sample files, scaling, run configuration and artifact manifests.

mod config;
mod manifest;
mod presets;
mod scaling;
mod tables;

pub use config::{DataSection, OutputSection, PreparedData, PresetName, PriorSection, RunConfig};
pub use manifest::{read_json, sha256_hex, write_json, ArtifactManifest};
pub use presets::{
    is_informative, lymphocyte_preset, spread_locations, vague_preset, Expression, PresetSettings, LYMPHOCYTE_MARKERS,
    LYMPHOCYTE_POPULATIONS,
};
pub use scaling::{apply_scaling, fit_scaling, ScalingTransform, MIN_SCALING_CELLS};
pub use tables::{load_samples, read_sample, sample_id, save_dataset};
