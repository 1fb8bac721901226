//! TOML run configuration for `hgmm fit` and `hgmm merge`.
//!
//! ```toml
//! [data]
//! samples = ["a.csv", "b.csv"]   # or: sample_dir = "data"
//! scale = true
//!
//! [prior]
//! preset = "lymphocyte"           # "vague" | "lymphocyte", or: file = "prior.json"
//! clusters = 17
//!
//! [mcmc]
//! burn_in = 2000
//! production = 10000
//! thin = 10
//! seed = 1
//!
//! [merge]
//! d1 = 0.2
//!
//! [output]
//! dir = "fit"
//! ```
//!
//! Relative paths are taken from the directory holding the config file.
//! Unknown keys anywhere are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::{lymphocyte_preset, vague_preset, PresetSettings, LYMPHOCYTE_POPULATIONS};
use super::scaling::{apply_scaling, fit_scaling, ScalingTransform};
use super::tables::load_samples;
use crate::error::{Error, Result};
use crate::mcmc::McmcConfig;
use crate::merge::MergeConfig;
use crate::model::{Dataset, PriorSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub samples: Vec<PathBuf>,
    /// Every `*.csv` in this directory, in file-name order.
    #[serde(default)]
    pub sample_dir: Option<PathBuf>,
    #[serde(default)]
    pub scale: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Vague,
    Lymphocyte,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default)]
    pub preset: Option<PresetName>,
    /// JSON file holding a full prior specification.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Number of latent clusters K. Required for `vague`; for `lymphocyte`
    /// it counts the five known populations plus the extras.
    #[serde(default)]
    pub clusters: Option<usize>,
    #[serde(default)]
    pub settings: PresetSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub prior: PriorSection,
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub merge: MergeConfig,
    pub output: OutputSection,
}

/// Data as handed to the sampler, with the transform if one was applied.
pub struct PreparedData {
    pub data: Dataset,
    pub scaling: Option<ScalingTransform>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse, make paths absolute relative to the file and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        c.validate()?;
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.data.samples.iter_mut() {
            *p = resolve(base, p);
        }
        if let Some(d) = self.data.sample_dir.as_mut() {
            *d = resolve(base, d);
        }
        if let Some(f) = self.prior.file.as_mut() {
            *f = resolve(base, f);
        }
        self.output.dir = resolve(base, &self.output.dir);
    }

    /// Checks that do not need the data: one source per section, referenced
    /// files exist, cluster counts agree.
    pub fn validate(&self) -> Result<()> {
        match (self.data.samples.is_empty(), &self.data.sample_dir) {
            (true, None) => return Err(Error::Config("[data] needs `samples` or `sample_dir`".into())),
            (false, Some(_)) => return Err(Error::Config("[data] takes `samples` or `sample_dir`, not both".into())),
            _ => {}
        }
        for p in &self.data.samples {
            if !p.is_file() {
                return Err(Error::Config(format!("sample file {} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.data.sample_dir {
            if !d.is_dir() {
                return Err(Error::Config(format!("sample_dir {} is not a directory", d.display())));
            }
        }
        match (&self.prior.preset, &self.prior.file) {
            (None, None) => return Err(Error::Config("[prior] needs `preset` or `file`".into())),
            (Some(_), Some(_)) => return Err(Error::Config("[prior] takes `preset` or `file`, not both".into())),
            (None, Some(f)) if !f.is_file() => {
                return Err(Error::Config(format!("prior file {} does not exist", f.display())))
            }
            _ => {}
        }
        match (self.prior.preset, self.prior.clusters) {
            (Some(PresetName::Vague), None) => return Err(Error::Config("vague preset needs `clusters`".into())),
            (Some(PresetName::Lymphocyte), Some(k)) if k < LYMPHOCYTE_POPULATIONS.len() => {
                return Err(Error::Config(format!(
                    "lymphocyte preset has {} known populations, `clusters` = {k} is too small",
                    LYMPHOCYTE_POPULATIONS.len()
                )))
            }
            _ => {}
        }
        self.mcmc.validate(usize::MAX)?;
        Ok(())
    }

    pub fn sample_paths(&self) -> Result<Vec<PathBuf>> {
        if let Some(dir) = &self.data.sample_dir {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::Config(format!("no .csv files in {}", dir.display())));
            }
            Ok(paths)
        } else {
            Ok(self.data.samples.clone())
        }
    }

    /// Load the samples and scale them if asked to.
    pub fn prepare_data(&self) -> Result<PreparedData> {
        let raw = load_samples(&self.sample_paths()?)?;
        self.mcmc.validate(raw.num_samples())?;
        if self.data.scale {
            let t = fit_scaling(&raw)?;
            Ok(PreparedData {
                data: apply_scaling(&raw, &t)?,
                scaling: Some(t),
            })
        } else {
            Ok(PreparedData { data: raw, scaling: None })
        }
    }

    /// Build the prior for the prepared data and check it against the data.
    pub fn build_prior(&self, data: &Dataset) -> Result<PriorSpec> {
        let prior = match (self.prior.preset, &self.prior.file) {
            (Some(PresetName::Vague), _) => vague_preset(data, self.prior.clusters.unwrap_or(0), &self.prior.settings)?,
            (Some(PresetName::Lymphocyte), _) => {
                let k = self.prior.clusters.unwrap_or(17);
                lymphocyte_preset(data, k - LYMPHOCYTE_POPULATIONS.len(), &self.prior.settings)?
            }
            (None, Some(f)) => {
                let text = std::fs::read_to_string(f)?;
                let p: PriorSpec = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", f.display())))?;
                if let Some(k) = self.prior.clusters {
                    if k != p.num_clusters() {
                        return Err(Error::Config(format!(
                            "`clusters` = {k} but prior file {} has {} clusters",
                            f.display(),
                            p.num_clusters()
                        )));
                    }
                }
                p
            }
            (None, None) => return Err(Error::Config("[prior] needs `preset` or `file`".into())),
        };
        prior.validate()?;
        if prior.dim() != data.dim() {
            return Err(Error::Config(format!("prior has dimension {}, data has {} markers", prior.dim(), data.dim())));
        }
        Ok(prior)
    }
}
