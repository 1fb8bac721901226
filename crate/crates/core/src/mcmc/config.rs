use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream id of the latent-layer random stream.
pub const LATENT_STREAM: u64 = 0;
/// Stream id of the posterior-predictive random stream.
pub const PREDICTIVE_STREAM: u64 = 1;
/// Sample `j` draws from stream `SAMPLE_STREAM_OFFSET + j`.
pub const SAMPLE_STREAM_OFFSET: u64 = 16;

/// Deliberate sampler defects, used to check that the correctness harness
/// can detect a broken conditional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// The component covariance update ignores the prior degrees of freedom.
    DropSigmaPriorDof,
}

/// Which posterior-predictive cells to draw at every recorded iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveConfig {
    /// Sample indices that each get one synthetic cell per recorded draw.
    #[serde(default)]
    pub samples: Vec<usize>,
    /// Also draw one cell from the pooled model (sample chosen by size).
    #[serde(default)]
    pub pooled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub production: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_true")]
    pub rj_enabled: bool,
    #[serde(default = "default_halfwidth")]
    pub nu_proposal_halfwidth: u32,
    /// Activation probability above which a component counts as present.
    #[serde(default = "default_activation_threshold")]
    pub activation_threshold: f64,
    pub seed: u64,
    /// Worker threads for the per-sample block; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub predictive: PredictiveConfig,
    /// Accumulate per-cell assignment frequencies during production.
    #[serde(default = "default_true")]
    pub record_assignments: bool,
    /// Pin every cell to the outlier component, turning the sampler into a
    /// prior sampler for all component and latent parameters.
    #[serde(default)]
    pub force_outlier: bool,
    #[serde(skip)]
    pub mutation: Option<Mutation>,
}

fn default_thin() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_halfwidth() -> u32 {
    2
}

fn default_activation_threshold() -> f64 {
    0.01
}

impl McmcConfig {
    pub fn new(burn_in: usize, production: usize, thin: usize, seed: u64) -> Self {
        McmcConfig {
            burn_in,
            production,
            thin,
            rj_enabled: true,
            nu_proposal_halfwidth: default_halfwidth(),
            activation_threshold: default_activation_threshold(),
            seed,
            workers: 0,
            predictive: PredictiveConfig::default(),
            record_assignments: true,
            force_outlier: false,
            mutation: None,
        }
    }

    pub fn num_draws(&self) -> usize {
        self.production / self.thin
    }

    pub fn validate(&self, num_samples: usize) -> Result<()> {
        if self.production < 1 {
            return Err(Error::Config("production must be at least 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.nu_proposal_halfwidth < 1 {
            return Err(Error::Config("nu_proposal_halfwidth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.activation_threshold) {
            return Err(Error::Config("activation_threshold must be a probability".into()));
        }
        if let Some(j) = self.predictive.samples.iter().find(|&&j| j >= num_samples) {
            return Err(Error::Config(format!(
                "predictive sample index {j} out of range (J = {num_samples})"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in_from_toml() {
        let c: McmcConfig = toml::from_str("burn_in = 5\nproduction = 20\nseed = 7\n").unwrap();
        assert_eq!(c.thin, 1);
        assert_eq!(c.nu_proposal_halfwidth, 2);
        assert!(c.rj_enabled);
        assert_eq!(c.activation_threshold, 0.01);
        c.validate(1).unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<McmcConfig, _> = toml::from_str("burn_in = 5\nproduction = 20\nseed = 7\nbogus = 1\n");
        assert!(r.is_err());
    }

    #[test]
    fn validation() {
        let mut c = McmcConfig::new(0, 0, 1, 1);
        assert!(c.validate(1).is_err());
        c.production = 10;
        c.thin = 0;
        assert!(c.validate(1).is_err());
        c.thin = 3;
        assert_eq!(c.num_draws(), 3);
        c.predictive.samples = vec![2];
        assert!(c.validate(2).is_err());
    }
}
