use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{Dataset, PriorSpec};
use crate::serde_util;

const SIMPLEX_TOL: f64 = 1e-12;

/// Parameters of latent cluster `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentState {
    #[serde(with = "serde_util::vector")]
    pub theta: DVector<f64>,
    #[serde(with = "serde_util::matrix")]
    pub sigma_theta: DMatrix<f64>,
    #[serde(with = "serde_util::matrix")]
    pub psi: DMatrix<f64>,
    pub nu: u32,
}

impl LatentState {
    /// Expected component covariance `Ψ / (ν - d - 1)`.
    pub fn latent_covariance(&self) -> DMatrix<f64> {
        let d = self.theta.len() as f64;
        &self.psi / (self.nu as f64 - d - 1.0)
    }
}

/// Per-sample mixture parameters and assignments.
///
/// `mu[k]`, `sigma[k]` and `active[k]` belong to component `k + 1`;
/// `pi[0]` and assignment value `0` denote the outlier component.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleState {
    pub mu: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub pi: Vec<f64>,
    pub assignments: Vec<u32>,
    pub active: Vec<bool>,
}

impl SampleState {
    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// All latent variables at one MCMC iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub latent: Vec<LatentState>,
    pub samples: Vec<SampleState>,
}

impl ChainState {
    pub fn num_clusters(&self) -> usize {
        self.latent.len()
    }

    pub fn dim(&self) -> usize {
        self.latent.first().map_or(0, |l| l.theta.len())
    }

    /// Deterministic starting point: every component active, latent
    /// parameters at their prior means, component parameters at the latent
    /// means and uniform weights.
    pub fn initial(prior: &PriorSpec, data: &Dataset) -> Self {
        let d = prior.dim();
        let k = prior.num_clusters();
        let latent: Vec<LatentState> = (0..k)
            .map(|c| {
                let cp = &prior.clusters[c];
                let n_theta = prior.n_theta(c);
                let n_psi = prior.n_psi(c);
                let nu = prior.nu_min + 2;
                LatentState {
                    theta: cp.t.clone(),
                    sigma_theta: &cp.q / (n_theta - d as f64 - 1.0),
                    psi: &cp.h * n_psi,
                    nu,
                }
            })
            .collect();
        let samples = data
            .sizes()
            .into_iter()
            .map(|n| SampleState {
                mu: latent.iter().map(|l| l.theta.clone()).collect(),
                sigma: latent.iter().map(|l| l.latent_covariance()).collect(),
                pi: vec![1.0 / (k + 1) as f64; k + 1],
                assignments: vec![0; n],
                active: vec![true; k],
            })
            .collect();
        ChainState { latent, samples }
    }

    /// Check every structural invariant of a chain state.
    pub fn validate(&self, prior: &PriorSpec) -> Result<()> {
        let d = prior.dim();
        let k = prior.num_clusters();
        if self.latent.len() != k {
            return Err(Error::InvalidState(format!(
                "{} latent clusters, prior has {k}",
                self.latent.len()
            )));
        }
        for (c, l) in self.latent.iter().enumerate() {
            if l.theta.len() != d {
                return Err(Error::InvalidState(format!("theta[{c}] has wrong length")));
            }
            if l.nu < prior.nu_min {
                return Err(Error::InvalidState(format!(
                    "nu[{c}] = {} below nu_min = {}",
                    l.nu, prior.nu_min
                )));
            }
            cholesky(&l.sigma_theta, "sigma_theta")?;
            cholesky(&l.psi, "psi")?;
        }
        for (j, s) in self.samples.iter().enumerate() {
            if s.mu.len() != k || s.sigma.len() != k || s.active.len() != k || s.pi.len() != k + 1 {
                return Err(Error::InvalidState(format!("sample {j} has inconsistent sizes")));
            }
            if !s.active.iter().any(|a| *a) {
                return Err(Error::InvalidState(format!("sample {j} has no active component")));
            }
            let total: f64 = s.pi.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL || s.pi.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidState(format!("sample {j}: weights are not on the simplex")));
            }
            for c in 0..k {
                if !s.active[c] && s.pi[c + 1] != 0.0 {
                    return Err(Error::InvalidState(format!(
                        "sample {j}: inactive component {} has nonzero weight",
                        c + 1
                    )));
                }
                if s.active[c] {
                    cholesky(&s.sigma[c], "component covariance")?;
                }
            }
            if let Some(x) = s
                .assignments
                .iter()
                .find(|&&x| x as usize > k || (x > 0 && !s.active[x as usize - 1]))
            {
                return Err(Error::InvalidState(format!(
                    "sample {j}: assignment {x} refers to an inactive or missing component"
                )));
            }
        }
        Ok(())
    }
}
