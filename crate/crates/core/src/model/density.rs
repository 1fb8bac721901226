//! Log densities used by the sampler and by `log_prior`.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, inv_quad_form, ln_multigamma, log_det, lower_row_major, trace_inv_product, Chol};
use crate::model::{ChainState, PriorSpec};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A normal density with its Cholesky factor cached for repeated evaluation.
#[derive(Clone, Debug)]
pub struct GaussianFactor {
    dim: usize,
    mean: Vec<f64>,
    lower: Vec<f64>,
    log_norm: f64,
}

impl GaussianFactor {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = cholesky(cov, "normal covariance")?;
        Ok(Self::from_cholesky(mean, &chol))
    }

    pub fn from_cholesky(mean: &DVector<f64>, chol: &Chol) -> Self {
        let d = mean.len();
        GaussianFactor {
            dim: d,
            mean: mean.as_slice().to_vec(),
            lower: lower_row_major(&chol.l()),
            log_norm: -0.5 * d as f64 * LN_2PI - 0.5 * log_det(chol),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln N(y; μ, Σ)`; `scratch` must hold at least `d` values.
    #[inline]
    pub fn log_density_with(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i + 1];
            let mut acc = y[i] - self.mean[i];
            for j in 0..i {
                acc -= row[j] * scratch[j];
            }
            let z = acc / row[i];
            scratch[i] = z;
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim];
        self.log_density_with(y, &mut scratch)
    }
}

/// Multivariate normal log density via the Cholesky factor of `sigma`.
pub fn log_gaussian(y: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::Dimension(format!(
            "point of length {} with mean of length {}",
            y.len(),
            mu.len()
        )));
    }
    Ok(GaussianFactor::new(mu, sigma)?.log_density(y.as_slice()))
}

/// `ln f(y)` for the sample-`j` mixture including the outlier component,
/// evaluated with log-sum-exp over the active components.
pub fn log_mixture_density(y: &DVector<f64>, state: &ChainState, prior: &PriorSpec, j: usize) -> Result<f64> {
    let sample = state
        .samples
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("no sample {j}")))?;
    let mut terms = Vec::with_capacity(sample.mu.len() + 1);
    if sample.pi[0] > 0.0 {
        terms.push(sample.pi[0].ln() + log_gaussian(y, &prior.outlier_mean, &prior.outlier_cov)?);
    }
    for k in 0..sample.mu.len() {
        if sample.active[k] && sample.pi[k + 1] > 0.0 {
            terms.push(sample.pi[k + 1].ln() + log_gaussian(y, &sample.mu[k], &sample.sigma[k])?);
        }
    }
    Ok(log_sum_exp(&terms))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Wishart `W(V, n)` log density (mean `n V`).
pub fn log_wishart(x: &DMatrix<f64>, scale: &DMatrix<f64>, dof: f64) -> Result<f64> {
    let d = x.nrows() as f64;
    let cx = cholesky(x, "Wishart argument")?;
    let cv = cholesky(scale, "Wishart scale")?;
    Ok(0.5 * (dof - d - 1.0) * log_det(&cx)
        - 0.5 * trace_inv_product(&cv, x)
        - 0.5 * dof * d * 2f64.ln()
        - 0.5 * dof * log_det(&cv)
        - ln_multigamma(x.nrows(), 0.5 * dof))
}

/// Inverse-Wishart `IW(Ψ, ν)` log density (mean `Ψ / (ν - d - 1)`).
pub fn log_inverse_wishart(x: &DMatrix<f64>, psi: &DMatrix<f64>, dof: f64) -> Result<f64> {
    let cx = cholesky(x, "inverse Wishart argument")?;
    let cpsi = cholesky(psi, "inverse Wishart scale")?;
    Ok(log_inverse_wishart_factored(&cx, psi, &cpsi, dof))
}

pub(crate) fn log_inverse_wishart_factored(cx: &Chol, psi: &DMatrix<f64>, cpsi: &Chol, dof: f64) -> f64 {
    let d = psi.nrows();
    let df = d as f64;
    0.5 * dof * log_det(cpsi)
        - 0.5 * dof * df * 2f64.ln()
        - ln_multigamma(d, 0.5 * dof)
        - 0.5 * (dof + df + 1.0) * log_det(cx)
        - 0.5 * trace_inv_product(cx, psi)
}

/// Dirichlet log density of `p` (on the simplex) with concentration `alpha`.
pub fn log_dirichlet(p: &[f64], alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut acc = ln_gamma(total);
    for (&pi, &a) in p.iter().zip(alpha) {
        acc += (a - 1.0) * pi.ln() - ln_gamma(a);
    }
    acc
}

/// `ln p(ν)` for the prior `p(ν) ∝ exp(-λ ν)` on integers `ν >= ν_min`.
pub fn log_nu_prior(nu: u32, lambda: f64, nu_min: u32) -> f64 {
    if nu < nu_min {
        return f64::NEG_INFINITY;
    }
    (-(-lambda).exp()).ln_1p() - lambda * (nu - nu_min) as f64
}

/// Joint log prior density of a chain state.
///
/// Terms: `θ_k` normal, `Σ_θk` inverse Wishart, `Ψ_k` Wishart, `ν_k`
/// normalized geometric-type mass, `μ_jk`/`Σ_jk` normal/inverse Wishart for
/// active components only, `π_j` Dirichlet over the outlier and the active
/// components, and the activation term `-c_s Σ_k Z_jk`.
///
/// The activation normalizer `ln((1 + e^{-c_s})^K - 1)` is omitted: it is
/// constant in the state, and leaving it out keeps the value linear in `c_s`.
pub fn log_prior(state: &ChainState, prior: &PriorSpec) -> Result<f64> {
    let k = prior.num_clusters();
    if state.latent.len() != k {
        return Err(Error::Dimension(format!(
            "state has {} latent clusters, prior has {k}",
            state.latent.len()
        )));
    }
    let mut acc = 0.0;
    let mut sigma_theta_chol = Vec::with_capacity(k);
    let mut psi_chol = Vec::with_capacity(k);
    for (c, l) in state.latent.iter().enumerate() {
        if l.nu < prior.nu_min {
            return Err(Error::InvalidState(format!(
                "nu[{}] = {} is below nu_min = {}",
                c + 1,
                l.nu,
                prior.nu_min
            )));
        }
        let cp = &prior.clusters[c];
        acc += log_gaussian(&l.theta, &cp.t, &cp.s)?;
        acc += log_inverse_wishart(&l.sigma_theta, &cp.q, prior.n_theta(c))?;
        acc += log_wishart(&l.psi, &cp.h, prior.n_psi(c))?;
        acc += log_nu_prior(l.nu, cp.lambda, prior.nu_min);
        sigma_theta_chol.push(cholesky(&l.sigma_theta, "sigma_theta")?);
        psi_chol.push(cholesky(&l.psi, "psi")?);
    }
    for (j, s) in state.samples.iter().enumerate() {
        if !s.active.iter().any(|a| *a) {
            return Err(Error::InvalidState(format!("sample {j} has no active component")));
        }
        let mut weights = vec![s.pi[0]];
        let mut alpha = vec![prior.dirichlet[0]];
        for c in 0..k {
            if !s.active[c] {
                continue;
            }
            let l = &state.latent[c];
            let resid = &s.mu[c] - &l.theta;
            let cst = &sigma_theta_chol[c];
            acc += -0.5 * l.theta.len() as f64 * LN_2PI - 0.5 * log_det(cst) - 0.5 * inv_quad_form(cst, &resid);
            let cs = cholesky(&s.sigma[c], "component covariance")?;
            acc += log_inverse_wishart_factored(&cs, &l.psi, &psi_chol[c], l.nu as f64);
            weights.push(s.pi[c + 1]);
            alpha.push(prior.dirichlet[c + 1]);
            acc -= prior.activation_penalty;
        }
        acc += log_dirichlet(&weights, &alpha);
    }
    Ok(acc)
}
