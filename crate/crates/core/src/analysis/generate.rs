//! Synthetic grouped data drawn top-down from the hierarchical model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{draw_categorical, draw_dirichlet, draw_inverse_wishart, draw_mvn, draw_mvn_factor, RngStream};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{CellMatrix, Dataset, LatentState, PriorSpec};
use crate::serde_util;

/// One latent cluster of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCluster {
    pub latent: LatentState,
    /// Relative weight when active (an absolute weight if `fixed_weight`).
    pub weight: f64,
    /// Use `weight` as the exact mixing proportion wherever the cluster is active.
    #[serde(default)]
    pub fixed_weight: bool,
}

/// Full description of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub cells_per_sample: Vec<usize>,
    pub clusters: Vec<GeneratorCluster>,
    /// `activation[j][k]`: whether cluster `k` is present in sample `j`.
    pub activation: Vec<Vec<bool>>,
    /// Dirichlet concentration of the non-fixed weights around their
    /// relative weights; larger means less variation between samples.
    pub weight_concentration: f64,
    pub outlier_fraction: f64,
    #[serde(with = "serde_util::vector")]
    pub outlier_mean: DVector<f64>,
    #[serde(with = "serde_util::matrix")]
    pub outlier_cov: DMatrix<f64>,
}

/// True per-sample parameters of a generated sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    #[serde(with = "serde_util::vectors")]
    pub mu: Vec<DVector<f64>>,
    #[serde(with = "serde_util::matrices")]
    pub sigma: Vec<DMatrix<f64>>,
    pub pi: Vec<f64>,
    pub active: Vec<bool>,
    pub assignments: Vec<u32>,
}

/// Everything needed to score a fit against the generating parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub latent: Vec<LatentState>,
    pub samples: Vec<SampleTruth>,
    /// Number of Gaussian components in the pooled data density (active
    /// sample components plus one shared outlier component).
    pub pooled_component_count: usize,
}

impl GroundTruth {
    /// `Ψ_k / (ν_k - d - 1)` for each cluster.
    pub fn latent_covariances(&self) -> Vec<DMatrix<f64>> {
        self.latent.iter().map(|l| l.latent_covariance()).collect()
    }
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        self.outlier_mean.len()
    }

    pub fn num_samples(&self) -> usize {
        self.cells_per_sample.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let k = self.clusters.len();
        let bad = |m: String| Err(Error::Config(m));
        if d == 0 || k == 0 || self.cells_per_sample.is_empty() {
            return bad("generator needs d >= 1, K >= 1 and J >= 1".into());
        }
        if self.cells_per_sample.contains(&0) {
            return bad("every sample needs at least one cell".into());
        }
        if self.activation.len() != self.num_samples() || self.activation.iter().any(|r| r.len() != k) {
            return bad("activation must be a J x K table".into());
        }
        if self.activation.iter().any(|r| !r.iter().any(|a| *a)) {
            return bad("every sample needs at least one active cluster".into());
        }
        for (i, c) in self.clusters.iter().enumerate() {
            let l = &c.latent;
            if l.theta.len() != d {
                return bad(format!("cluster {}: theta has wrong length", i + 1));
            }
            cholesky(&l.sigma_theta, "sigma_theta").map_err(|e| Error::Config(e.to_string()))?;
            cholesky(&l.psi, "psi").map_err(|e| Error::Config(e.to_string()))?;
            if (l.nu as usize) < d + 2 {
                return bad(format!("cluster {}: nu must be at least d + 2", i + 1));
            }
            if !(c.weight > 0.0) {
                return bad(format!("cluster {}: weight must be positive", i + 1));
            }
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)".into());
        }
        if !(self.weight_concentration > 0.0) {
            return bad("weight_concentration must be positive".into());
        }
        cholesky(&self.outlier_cov, "outlier covariance").map_err(|e| Error::Config(e.to_string()))?;
        for row in &self.activation {
            let fixed: f64 = row
                .iter()
                .zip(&self.clusters)
                .filter(|(a, c)| **a && c.fixed_weight)
                .map(|(_, c)| c.weight)
                .sum();
            if fixed + self.outlier_fraction >= 1.0 {
                return bad("fixed weights plus outlier fraction must stay below 1".into());
            }
        }
        Ok(())
    }

    /// The reference simulation design: four clusters in three
    /// dimensions, one rare cluster present in a tenth of the samples at 1%
    /// of the cells and one present in three tenths of the samples.
    ///
    /// Parameter values are chosen for visibly multimodal pooled marginals on
    /// a unit scale. No outlier cells are
    /// generated; set `outlier_fraction` to add them.
    pub fn reference_like(num_samples: usize, cells: usize) -> Self {
        let d = 3;
        let corr = |v: f64, r: f64| {
            let mut m = DMatrix::identity(d, d) * v;
            m[(0, 1)] = r * v;
            m[(1, 0)] = r * v;
            m
        };
        let nu = 15u32;
        let scale = (nu - d as u32 - 1) as f64;
        let thetas = [[0.2, 0.2, 0.2], [0.8, 0.2, 0.5], [0.5, 0.8, 0.2], [0.2, 0.8, 0.8]];
        let latent_cov = [corr(0.005, 0.4), corr(0.004, -0.3), corr(0.006, 0.2), corr(0.003, 0.0)];
        let weights = [0.45, 0.35, 0.2, 0.01];
        let clusters = (0..4)
            .map(|k| GeneratorCluster {
                latent: LatentState {
                    theta: DVector::from_row_slice(&thetas[k]),
                    sigma_theta: DMatrix::identity(d, d) * 0.002,
                    psi: &latent_cov[k] * scale,
                    nu,
                },
                weight: weights[k],
                fixed_weight: k == 3,
            })
            .collect();
        let activation = (0..num_samples)
            .map(|j| vec![true, true, matches!(j % 10, 1 | 4 | 7), j % 10 == 0])
            .collect();
        GeneratorSpec {
            cells_per_sample: vec![cells; num_samples],
            clusters,
            activation,
            weight_concentration: 50.0,
            outlier_fraction: 0.0,
            outlier_mean: DVector::from_element(d, 0.5),
            outlier_cov: DMatrix::identity(d, d) * 0.1,
        }
    }

    /// The full-size design (80 samples of 15000 cells) with the cell count
    /// multiplied by `scale`.
    pub fn reference(scale: f64) -> Self {
        Self::reference_like(80, (15000.0 * scale).round().max(1.0) as usize)
    }

    /// Desk-scale replica: 20 samples of 2000 cells.
    pub fn desk() -> Self {
        Self::reference_like(20, 2000)
    }
}

fn sample_weights(spec: &GeneratorSpec, active: &[bool], rng: &mut RngStream) -> Result<Vec<f64>> {
    let k = spec.clusters.len();
    let mut pi = vec![0.0; k + 1];
    pi[0] = spec.outlier_fraction;
    let mut free = Vec::new();
    let mut fixed_total = 0.0;
    for c in 0..k {
        if !active[c] {
            continue;
        }
        if spec.clusters[c].fixed_weight {
            pi[c + 1] = spec.clusters[c].weight;
            fixed_total += spec.clusters[c].weight;
        } else {
            free.push(c);
        }
    }
    let rest = 1.0 - spec.outlier_fraction - fixed_total;
    if free.is_empty() {
        let scale = (1.0 - spec.outlier_fraction) / fixed_total;
        for c in 0..k {
            pi[c + 1] *= scale;
        }
    } else {
        let rel_total: f64 = free.iter().map(|&c| spec.clusters[c].weight).sum();
        let alpha: Vec<f64> = free
            .iter()
            .map(|&c| spec.weight_concentration * spec.clusters[c].weight / rel_total)
            .collect();
        let draw = draw_dirichlet(&alpha, rng)?;
        for (&c, w) in free.iter().zip(draw) {
            pi[c + 1] = rest * w;
        }
    }
    Ok(pi)
}

/// Draw a dataset from `spec`: per sample component parameters from the
/// latent layer, weights, labels and finally the cells.
pub fn generate_synthetic(spec: &GeneratorSpec, rng: &mut RngStream) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let d = spec.dim();
    let k = spec.clusters.len();
    let outlier_l = cholesky(&spec.outlier_cov, "outlier covariance")?.l();
    let mut mats = Vec::with_capacity(spec.num_samples());
    let mut truths = Vec::with_capacity(spec.num_samples());
    for (j, &n) in spec.cells_per_sample.iter().enumerate() {
        let active = spec.activation[j].clone();
        let mut mu = Vec::with_capacity(k);
        let mut sigma = Vec::with_capacity(k);
        for c in &spec.clusters {
            mu.push(draw_mvn(&c.latent.theta, &c.latent.sigma_theta, rng)?);
            sigma.push(draw_inverse_wishart(&c.latent.psi, c.latent.nu as f64, rng)?);
        }
        let pi = sample_weights(spec, &active, rng)?;
        let lowers = sigma
            .iter()
            .map(|s| cholesky(s, "component covariance").map(|c| c.l()))
            .collect::<Result<Vec<_>>>()?;
        let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        let mut values = Vec::with_capacity(n * d);
        let mut assignments = Vec::with_capacity(n);
        for _ in 0..n {
            let x = draw_categorical(&log_pi, rng)?;
            let y = if x == 0 {
                draw_mvn_factor(&spec.outlier_mean, &outlier_l, rng)
            } else {
                draw_mvn_factor(&mu[x - 1], &lowers[x - 1], rng)
            };
            values.extend(y.iter());
            assignments.push(x as u32);
        }
        mats.push(CellMatrix::new(n, d, values)?);
        truths.push(SampleTruth {
            mu,
            sigma,
            pi,
            active,
            assignments,
        });
    }
    let pooled_component_count = truths.iter().map(|t| t.active.iter().filter(|a| **a).count()).sum::<usize>()
        + usize::from(spec.outlier_fraction > 0.0);
    let truth = GroundTruth {
        latent: spec.clusters.iter().map(|c| c.latent.clone()).collect(),
        samples: truths,
        pooled_component_count,
    };
    Ok((Dataset::from_samples(mats)?, truth))
}

/// Moderately informative prior for fitting data from a generator spec.
///
/// Each `t_k` is the true `θ_k` moved by a few hundredths in every
/// coordinate, so recovery is never scored against a prior centred on the
/// truth. Spreads follow the preset's scale.
pub fn informative_prior(truth: &GroundTruth, data: &Dataset) -> PriorSpec {
    const SHIFT: [f64; 3] = [0.03, -0.04, 0.05];
    let centers: Vec<DVector<f64>> = truth
        .latent
        .iter()
        .map(|l| DVector::from_fn(l.theta.len(), |a, _| l.theta[a] + SHIFT[a % 3]))
        .collect();
    PriorSpec::vague(&centers, 0.01, 0.063, 0.045, PriorSpec::default_outlier(data))
}
