use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::Dataset;
use crate::serde_util;

/// Hyperparameters of one latent cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterPrior {
    /// Prior mean of the latent location `θ_k`.
    #[serde(with = "serde_util::vector")]
    pub t: DVector<f64>,
    /// Prior covariance of `θ_k`.
    #[serde(with = "serde_util::matrix")]
    pub s: DMatrix<f64>,
    /// Inverse-Wishart scale for the spread of component means `Σ_θk`.
    #[serde(with = "serde_util::matrix")]
    pub q: DMatrix<f64>,
    /// Wishart scale for the latent covariance scale `Ψ_k`.
    #[serde(with = "serde_util::matrix")]
    pub h: DMatrix<f64>,
    /// Rate of the geometric-type prior on `ν_k`.
    pub lambda: f64,
    /// Per-cluster override of the shared `n_θ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<f64>,
    /// Per-cluster override of the shared `n_Ψ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_psi: Option<f64>,
}

/// Full prior specification of the hierarchical mixture.
///
/// Component indices: `dirichlet[0]` is the outlier weight and
/// `dirichlet[k + 1]` belongs to `clusters[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub clusters: Vec<ClusterPrior>,
    pub n_theta: f64,
    pub n_psi: f64,
    pub dirichlet: Vec<f64>,
    pub activation_penalty: f64,
    pub nu_min: u32,
    #[serde(with = "serde_util::vector")]
    pub outlier_mean: DVector<f64>,
    #[serde(with = "serde_util::matrix")]
    pub outlier_cov: DMatrix<f64>,
}

impl PriorSpec {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn dim(&self) -> usize {
        self.outlier_mean.len()
    }

    pub fn n_theta(&self, k: usize) -> f64 {
        self.clusters[k].n_theta.unwrap_or(self.n_theta)
    }

    pub fn n_psi(&self, k: usize) -> f64 {
        self.clusters[k].n_psi.unwrap_or(self.n_psi)
    }

    /// Default outlier component: pooled mean and four times the pooled covariance.
    pub fn default_outlier(data: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
        (data.pooled_mean(), data.pooled_cov() * 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let k = self.num_clusters();
        if d == 0 {
            return Err(Error::Config("prior dimension must be at least 1".into()));
        }
        if k == 0 {
            return Err(Error::Config("prior needs at least one latent cluster".into()));
        }
        let spd = |m: &DMatrix<f64>, what: String| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Config(format!("{what} must be {d}x{d}")));
            }
            cholesky(m, &what).map(|_| ()).map_err(|e| Error::Config(e.to_string()))
        };
        for (i, c) in self.clusters.iter().enumerate() {
            if c.t.len() != d {
                return Err(Error::Config(format!("cluster {}: t must have length {d}", i + 1)));
            }
            spd(&c.s, format!("cluster {} S", i + 1))?;
            spd(&c.q, format!("cluster {} Q", i + 1))?;
            spd(&c.h, format!("cluster {} H", i + 1))?;
            if !(c.lambda > 0.0) || !c.lambda.is_finite() {
                return Err(Error::Config(format!("cluster {}: lambda must be positive", i + 1)));
            }
        }
        for i in 0..k {
            if !(self.n_theta(i) > d as f64 + 1.0) {
                return Err(Error::Config(format!("n_theta must exceed d + 1 = {}", d + 1)));
            }
            if !(self.n_psi(i) > d as f64 - 1.0) {
                return Err(Error::Config(format!("n_psi must exceed d - 1 = {}", d as f64 - 1.0)));
            }
        }
        if self.dirichlet.len() != k + 1 {
            return Err(Error::Config(format!(
                "dirichlet needs K + 1 = {} weights (outlier first), got {}",
                k + 1,
                self.dirichlet.len()
            )));
        }
        if self.dirichlet.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("dirichlet weights must be positive".into()));
        }
        if !(self.activation_penalty > 0.0) || !self.activation_penalty.is_finite() {
            return Err(Error::Config("activation penalty c_s must be positive".into()));
        }
        if (self.nu_min as usize) < d + 2 {
            return Err(Error::Config(format!("nu_min must be at least d + 2 = {}", d + 2)));
        }
        spd(&self.outlier_cov, "outlier covariance".into())?;
        Ok(())
    }

    /// Vague prior suited to data scaled to roughly `[0, 1]` per marker.
    ///
    /// Every latent location is centered on `center` with covariance
    /// `location_var * I`; components are expected to have a standard
    /// deviation around `component_sd` and their means to spread across
    /// samples by about `spread_sd`.
    pub fn vague(
        centers: &[DVector<f64>],
        location_var: f64,
        component_sd: f64,
        spread_sd: f64,
        outlier: (DVector<f64>, DMatrix<f64>),
    ) -> Self {
        let d = outlier.0.len();
        let eye = DMatrix::<f64>::identity(d, d);
        let n_theta = d as f64 + 5.0;
        let n_psi = d as f64 + 2.0;
        let nu_guess = 2.0 * d as f64 + 6.0;
        let target_psi = &eye * (component_sd * component_sd * (nu_guess - d as f64 - 1.0));
        let clusters = centers
            .iter()
            .map(|t| ClusterPrior {
                t: t.clone(),
                s: &eye * location_var,
                q: &eye * (spread_sd * spread_sd * (n_theta - d as f64 - 1.0)),
                h: &target_psi / n_psi,
                lambda: 0.05,
                n_theta: None,
                n_psi: None,
            })
            .collect::<Vec<_>>();
        let k = clusters.len();
        PriorSpec {
            clusters,
            n_theta,
            n_psi,
            dirichlet: vec![1.0; k + 1],
            activation_penalty: 5.0,
            nu_min: d as u32 + 2,
            outlier_mean: outlier.0,
            outlier_cov: outlier.1,
        }
    }
}
