//! Forward simulation from the prior and from the likelihood.

use nalgebra::DMatrix;

use crate::dist::{draw_categorical, draw_dirichlet, draw_inverse_wishart, draw_mvn, draw_wishart, RngStream};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{CellMatrix, ChainState, Dataset, LatentState, PriorSpec, SampleState};

/// `ν ~ p(ν) ∝ exp(-λ ν)` on `ν >= ν_min` by inversion.
pub fn draw_nu_prior(lambda: f64, nu_min: u32, rng: &mut RngStream) -> u32 {
    let e = -rng.open_uniform().ln();
    nu_min + (e / lambda).floor().min(1e6) as u32
}

/// Activation vector from `p(Z) ∝ exp(-c_s Σ Z) I(Σ Z > 0)`.
///
/// Coordinates are independent Bernoulli draws under the unrestricted prior;
/// the all-inactive vector is rejected and redrawn.
pub fn draw_activation_prior(k: usize, penalty: f64, rng: &mut RngStream) -> Vec<bool> {
    let p_on = 1.0 / (1.0 + penalty.exp());
    loop {
        let z: Vec<bool> = (0..k).map(|_| rng.uniform() < p_on).collect();
        if z.iter().any(|a| *a) {
            return z;
        }
    }
}

/// Draw every latent variable from the prior.
///
/// When `all_active` is set every component is active (the model without
/// activation moves); otherwise activations come from their prior.
/// Inactive components still get parameters from the latent prior, matching
/// the sampler's treatment of them as auxiliary variables.
pub fn draw_prior_state(prior: &PriorSpec, sizes: &[usize], all_active: bool, rng: &mut RngStream) -> Result<ChainState> {
    let k = prior.num_clusters();
    let latent = (0..k)
        .map(|c| {
            let cp = &prior.clusters[c];
            Ok(LatentState {
                theta: draw_mvn(&cp.t, &cp.s, rng)?,
                sigma_theta: draw_inverse_wishart(&cp.q, prior.n_theta(c), rng)?,
                psi: draw_wishart(&cp.h, prior.n_psi(c), rng)?,
                nu: draw_nu_prior(cp.lambda, prior.nu_min, rng),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let active = if all_active {
            vec![true; k]
        } else {
            draw_activation_prior(k, prior.activation_penalty, rng)
        };
        let mut mu = Vec::with_capacity(k);
        let mut sigma = Vec::with_capacity(k);
        for l in &latent {
            mu.push(draw_mvn(&l.theta, &l.sigma_theta, rng)?);
            sigma.push(draw_inverse_wishart(&l.psi, l.nu as f64, rng)?);
        }
        let alpha: Vec<f64> = std::iter::once(prior.dirichlet[0])
            .chain((0..k).filter(|&c| active[c]).map(|c| prior.dirichlet[c + 1]))
            .collect();
        let draw = draw_dirichlet(&alpha, rng)?;
        let mut pi = vec![0.0; k + 1];
        pi[0] = draw[0];
        let mut it = draw[1..].iter();
        for c in 0..k {
            if active[c] {
                pi[c + 1] = *it.next().unwrap();
            }
        }
        samples.push(SampleState {
            mu,
            sigma,
            pi,
            assignments: vec![0; n],
            active,
        });
    }
    Ok(ChainState { latent, samples })
}

/// Regenerate assignments and cells from the mixture given the parameters.
///
/// The assignments are written back into `state`; the cells are returned as
/// a dataset with one sample per entry of `state.samples`.
pub fn draw_cells(state: &mut ChainState, prior: &PriorSpec, rng: &mut RngStream) -> Result<Dataset> {
    let d = prior.dim();
    let outlier_l = cholesky(&prior.outlier_cov, "outlier covariance")?.l();
    let mut mats = Vec::with_capacity(state.samples.len());
    for s in state.samples.iter_mut() {
        let k = s.mu.len();
        let lower: Vec<Option<DMatrix<f64>>> = (0..k)
            .map(|c| {
                if s.active[c] {
                    cholesky(&s.sigma[c], "component covariance").map(|ch| Some(ch.l()))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let log_pi: Vec<f64> = s.pi.iter().map(|p| p.ln()).collect();
        let n = s.assignments.len();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            let x = draw_categorical(&log_pi, rng)?;
            s.assignments[i] = x as u32;
            let y = if x == 0 {
                crate::dist::draw_mvn_factor(&prior.outlier_mean, &outlier_l, rng)
            } else {
                let l = lower[x - 1]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("positive weight on an inactive component".into()))?;
                crate::dist::draw_mvn_factor(&s.mu[x - 1], l, rng)
            };
            values.extend(y.iter());
        }
        mats.push(CellMatrix::new(n, d, values)?);
    }
    Dataset::from_samples(mats)
}
