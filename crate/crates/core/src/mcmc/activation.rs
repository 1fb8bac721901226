//! Reversible-jump birth/death moves on the component activations `Z_j`.
//!
//! The move targets the weights and activations with the assignments
//! integrated out, so the likelihood factor is the ratio of observed-data
//! mixture densities over all cells of the sample. A component may die
//! while cells are assigned to it. When a move is accepted the assignments
//! are redrawn from their full conditional, which keeps the joint chain on
//! `(Z, π, x)` invariant.

use statrs::function::gamma::ln_gamma;

use crate::dist::{draw_beta, draw_inverse_wishart, draw_mvn, RngStream};
use crate::error::Result;
use crate::model::{log_sum_exp, CellMatrix, GaussianFactor, LatentState, PriorSpec, SampleState};

use super::updates::{update_assignments, AssignmentStats, SampleDiagnostics};
/// Log acceptance-ratio terms of a birth (or, negated, a death) move.
///
/// The factor `(a_k - 1) ln w` appears in both the Dirichlet prior ratio and
/// the Beta proposal density and cancels exactly; it is left out of both
/// terms so a zero weight is handled without `0 * -inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RjTerms {
    pub log_likelihood: f64,
    pub log_dirichlet: f64,
    pub log_activation: f64,
    pub log_proposal: f64,
    pub log_jacobian: f64,
}

impl RjTerms {
    pub fn total(&self) -> f64 {
        self.log_likelihood + self.log_dirichlet + self.log_activation - self.log_proposal + self.log_jacobian
    }

    fn negate(self) -> Self {
        RjTerms {
            log_likelihood: -self.log_likelihood,
            log_dirichlet: -self.log_dirichlet,
            log_activation: -self.log_activation,
            log_proposal: -self.log_proposal,
            log_jacobian: -self.log_jacobian,
        }
    }
}

/// Terms for adding a component with weight `w` to a sample whose current
/// nonzero weights (outlier included) have Dirichlet parameters
/// `existing_alpha`. `log_likelihood` is the data log-likelihood ratio of
/// the move.
pub fn birth_terms(log_likelihood: f64, w: f64, a_new: f64, existing_alpha: &[f64], penalty: f64) -> RjTerms {
    let a_sum: f64 = existing_alpha.iter().sum();
    let coords = existing_alpha.len() as f64;
    let l1w = (-w).ln_1p();
    let log_beta_norm = ln_gamma(a_new + a_sum) - ln_gamma(a_new) - ln_gamma(a_sum);
    RjTerms {
        log_likelihood,
        log_dirichlet: log_beta_norm + (a_sum - coords) * l1w,
        log_activation: -penalty,
        log_proposal: log_beta_norm + (a_sum - 1.0) * l1w,
        log_jacobian: (coords - 1.0) * l1w,
    }
}

/// Terms for removing a component of weight `w`; `remaining_alpha` are the
/// Dirichlet parameters of the weights that stay. Apart from the likelihood
/// this is the exact reverse of [`birth_terms`] on the reduced state.
pub fn death_terms(log_likelihood: f64, w: f64, a_removed: f64, remaining_alpha: &[f64], penalty: f64) -> RjTerms {
    let mut t = birth_terms(0.0, w, a_removed, remaining_alpha, penalty).negate();
    t.log_likelihood = log_likelihood;
    t
}

/// Log-likelihood ratio of a birth (`sign = +1`) of component `k` with weight
/// `w` and factor `new`, or of the death (`sign = -1`) of active component `k`.
fn mixture_log_ratio(
    sample: &SampleState,
    cells: &CellMatrix,
    outlier: &GaussianFactor,
    k: usize,
    new: &GaussianFactor,
    w: f64,
    birth: bool,
) -> Result<f64> {
    let kk = sample.mu.len();
    let mut offsets = Vec::with_capacity(kk + 1);
    let mut factors = Vec::with_capacity(kk + 1);
    let mut is_k = Vec::with_capacity(kk + 1);
    if sample.pi[0] > 0.0 {
        offsets.push(sample.pi[0].ln());
        factors.push(outlier.clone());
        is_k.push(false);
    }
    for c in 0..kk {
        if sample.active[c] && sample.pi[c + 1] > 0.0 && !(birth && c == k) {
            offsets.push(sample.pi[c + 1].ln());
            factors.push(if c == k { new.clone() } else { GaussianFactor::new(&sample.mu[c], &sample.sigma[c])? });
            is_k.push(c == k);
        }
    }
    let l1w = (-w).ln_1p();
    let mut scratch = vec![0.0; cells.cols()];
    let mut old = vec![0.0; factors.len()];
    let mut rest = Vec::with_capacity(factors.len());
    let mut acc = 0.0;
    for y in cells.iter_rows() {
        rest.clear();
        for (c, f) in factors.iter().enumerate() {
            old[c] = offsets[c] + f.log_density_with(y, &mut scratch);
            if !is_k[c] {
                rest.push(old[c]);
            }
        }
        let before = log_sum_exp(&old);
        if birth {
            rest.iter_mut().for_each(|v| *v += l1w);
            rest.push(w.ln() + new.log_density_with(y, &mut scratch));
            acc += log_sum_exp(&rest) - before;
        } else {
            acc += log_sum_exp(&rest) - l1w - before;
        }
    }
    Ok(acc)
}

fn existing_alpha(sample: &SampleState, prior: &PriorSpec, skip: Option<usize>) -> Vec<f64> {
    let a = &prior.dirichlet;
    std::iter::once(a[0])
        .chain((0..sample.active.len()).filter(|&c| sample.active[c] && Some(c) != skip).map(|c| a[c + 1]))
        .collect()
}

/// Log acceptance ratio for switching on inactive component `k` with weight
/// `w` and parameters `factor` (drawn from the latent prior).
#[allow(clippy::too_many_arguments)]
pub fn birth_log_ratio(
    sample: &SampleState,
    cells: &CellMatrix,
    outlier: &GaussianFactor,
    use_data: bool,
    prior: &PriorSpec,
    k: usize,
    w: f64,
    factor: &GaussianFactor,
) -> Result<f64> {
    let lik = if use_data { mixture_log_ratio(sample, cells, outlier, k, factor, w, true)? } else { 0.0 };
    let existing = existing_alpha(sample, prior, None);
    Ok(birth_terms(lik, w, prior.dirichlet[k + 1], &existing, prior.activation_penalty).total())
}

/// Log acceptance ratio for switching off active component `k`.
pub fn death_log_ratio(
    sample: &SampleState,
    cells: &CellMatrix,
    outlier: &GaussianFactor,
    use_data: bool,
    prior: &PriorSpec,
    k: usize,
) -> Result<f64> {
    let w = sample.pi[k + 1];
    let lik = if use_data {
        let factor = GaussianFactor::new(&sample.mu[k], &sample.sigma[k])?;
        mixture_log_ratio(sample, cells, outlier, k, &factor, w, false)?
    } else {
        0.0
    };
    let remaining = existing_alpha(sample, prior, Some(k));
    Ok(death_terms(lik, w, prior.dirichlet[k + 1], &remaining, prior.activation_penalty).total())
}

/// One birth/death proposal for a sample. Returns the new assignment
/// statistics when the move is accepted.
pub fn update_activation(
    sample: &mut SampleState,
    cells: &CellMatrix,
    outlier: &GaussianFactor,
    force_outlier: bool,
    prior: &PriorSpec,
    latent: &[LatentState],
    rng: &mut RngStream,
    diag: &mut SampleDiagnostics,
) -> Result<Option<AssignmentStats>> {
    let k = rng.index(sample.active.len());
    // with every cell pinned to the outlier the data carry no information
    let use_data = !force_outlier;
    if sample.active[k] {
        diag.deaths_proposed += 1;
        if sample.num_active() == 1 {
            return Ok(None);
        }
        let log_ratio = death_log_ratio(sample, cells, outlier, use_data, prior, k)?;
        if rng.open_uniform().ln() >= log_ratio {
            return Ok(None);
        }
        sample.active[k] = false;
        sample.pi[k + 1] = 0.0;
        let total: f64 = sample.pi.iter().sum();
        sample.pi.iter_mut().for_each(|p| *p /= total);
        diag.deaths_accepted += 1;
    } else {
        diag.births_proposed += 1;
        let a_sum: f64 = existing_alpha(sample, prior, None).iter().sum();
        let w = draw_beta(prior.dirichlet[k + 1], a_sum, rng)?;
        let l = &latent[k];
        let mu = draw_mvn(&l.theta, &l.sigma_theta, rng)?;
        let sigma = draw_inverse_wishart(&l.psi, l.nu as f64, rng)?;
        if !(w > 0.0 && w < 1.0) {
            return Ok(None);
        }
        let factor = match GaussianFactor::new(&mu, &sigma) {
            Ok(f) => f,
            Err(_) => {
                diag.rejected_updates += 1;
                return Ok(None);
            }
        };
        let log_ratio = birth_log_ratio(sample, cells, outlier, use_data, prior, k, w, &factor)?;
        if rng.open_uniform().ln() >= log_ratio {
            return Ok(None);
        }
        sample.mu[k] = mu;
        sample.sigma[k] = sigma;
        sample.pi.iter_mut().for_each(|p| *p *= 1.0 - w);
        sample.pi[k + 1] = w;
        let total: f64 = sample.pi.iter().sum();
        sample.pi.iter_mut().for_each(|p| *p /= total);
        sample.active[k] = true;
        diag.births_accepted += 1;
    }
    update_assignments(sample, cells, outlier, force_outlier, rng).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::density_tests::{toy_prior_1d, toy_state_1d};
    use crate::model::{log_gaussian, log_inverse_wishart, log_mixture_density, log_prior, ChainState};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use statrs::function::beta::ln_beta;

    #[test]
    fn birth_terms_match_full_densities() {
        // full Dirichlet ratio and Beta density, including the ln w terms
        let (w, a_new) = (0.3, 2.5);
        let alpha = [0.5, 1.0, 2.0];
        let pi = [0.2, 0.5, 0.3];
        let a_sum: f64 = alpha.iter().sum();
        let dir = |p: &[f64], a: &[f64]| {
            ln_gamma(a.iter().sum())
                + p.iter().zip(a).map(|(pi, ai)| (ai - 1.0) * pi.ln() - ln_gamma(*ai)).sum::<f64>()
        };
        let mut new_pi: Vec<f64> = pi.iter().map(|p| p * (1.0 - w)).collect();
        new_pi.push(w);
        let mut new_alpha = alpha.to_vec();
        new_alpha.push(a_new);
        let full_dir = dir(&new_pi, &new_alpha) - dir(&pi, &alpha);
        let beta = (a_new - 1.0) * w.ln() + (a_sum - 1.0) * (1.0 - w).ln() - ln_beta(a_new, a_sum);
        let t = birth_terms(0.0, w, a_new, &alpha, 1.0);
        let common = (a_new - 1.0) * w.ln();
        assert_relative_eq!(t.log_dirichlet + common, full_dir, epsilon = 1e-12);
        assert_relative_eq!(t.log_proposal + common, beta, epsilon = 1e-12);
    }

    #[test]
    fn birth_then_death_is_identity() {
        for &(lik, w, a_new) in &[(0.0, 0.05, 1.0), (-3.2, 0.4, 0.7), (17.0, 1e-4, 3.0)] {
            let existing = [1.0, 1.0, 2.0];
            let birth = birth_terms(lik, w, a_new, &existing, 2.5);
            let death = death_terms(-lik, w, a_new, &existing, 2.5);
            assert_relative_eq!(birth.total() + death.total(), 0.0, epsilon = 1e-12);
        }
    }

    fn cells() -> CellMatrix {
        CellMatrix::new(6, 1, vec![0.3, -0.5, 2.9, 3.4, 1.0, 7.5]).unwrap()
    }

    fn log_post(state: &ChainState, prior: &PriorSpec, data: &CellMatrix) -> f64 {
        let mut acc = log_prior(state, prior).unwrap();
        for y in data.iter_rows() {
            acc += log_mixture_density(&DVector::from_row_slice(y), state, prior, 1).unwrap();
        }
        acc
    }

    // The move ratio must equal the observed-data posterior ratio divided by
    // the proposal density of (w, μ, Σ), times the Jacobian of the weight map.
    #[test]
    fn birth_ratio_matches_posterior_oracle() {
        let prior = toy_prior_1d();
        let state = toy_state_1d();
        let data = cells();
        let outlier = GaussianFactor::new(&prior.outlier_mean, &prior.outlier_cov).unwrap();
        let (w, mu, sigma) = (0.22, DVector::from_element(1, 2.8), DMatrix::from_element(1, 1, 0.45));
        let mut after = state.clone();
        let s = &mut after.samples[1];
        s.mu[1] = mu.clone();
        s.sigma[1] = sigma.clone();
        s.pi = vec![0.25 * (1.0 - w), 0.75 * (1.0 - w), w];
        s.active[1] = true;

        let l = &state.latent[1];
        let a_sum = prior.dirichlet[0] + prior.dirichlet[1];
        let a_new = prior.dirichlet[2];
        let log_q = (a_new - 1.0) * w.ln() + (a_sum - 1.0) * (1.0 - w).ln() - ln_beta(a_new, a_sum)
            + log_gaussian(&mu, &l.theta, &l.sigma_theta).unwrap()
            + log_inverse_wishart(&sigma, &l.psi, l.nu as f64).unwrap();
        let jacobian = (2.0 - 1.0) * (1.0 - w).ln();
        let expected = log_post(&after, &prior, &data) - log_post(&state, &prior, &data) - log_q + jacobian;

        let factor = GaussianFactor::new(&mu, &sigma).unwrap();
        let got = birth_log_ratio(&state.samples[1], &data, &outlier, true, &prior, 1, w, &factor).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-10);

        // the death from the enlarged state is the exact reverse
        let back = death_log_ratio(&after.samples[1], &data, &outlier, true, &prior, 1).unwrap();
        assert_relative_eq!(back, -expected, epsilon = 1e-10);
    }

    #[test]
    fn death_allowed_with_cells_assigned() {
        let prior = toy_prior_1d();
        let mut state = toy_state_1d();
        let data = cells();
        let outlier = GaussianFactor::new(&prior.outlier_mean, &prior.outlier_cov).unwrap();
        state.samples[1].assignments = vec![1; 6];
        let r = death_log_ratio(&state.samples[1], &data, &outlier, true, &prior, 0).unwrap();
        assert!(r.is_finite());
        let no_data = death_log_ratio(&state.samples[1], &data, &outlier, false, &prior, 0).unwrap();
        // without data only the weight and activation terms remain
        let remaining = [prior.dirichlet[0]];
        let t = death_terms(0.0, 0.75, prior.dirichlet[1], &remaining, prior.activation_penalty);
        assert_relative_eq!(no_data, t.total(), epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_death_has_unit_likelihood_ratio() {
        let prior = toy_prior_1d();
        let mut state = toy_state_1d();
        let data = cells();
        let outlier = GaussianFactor::new(&prior.outlier_mean, &prior.outlier_cov).unwrap();
        let s = &mut state.samples[0];
        s.pi = vec![0.4, 0.6, 0.0];
        let with_data = death_log_ratio(s, &data, &outlier, true, &prior, 1).unwrap();
        let without = death_log_ratio(s, &data, &outlier, false, &prior, 1).unwrap();
        assert_eq!(with_data, without);
    }

    #[test]
    fn accepted_move_redraws_consistent_assignments() {
        let prior = toy_prior_1d();
        let state = toy_state_1d();
        let data = cells();
        let outlier = GaussianFactor::new(&prior.outlier_mean, &prior.outlier_cov).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut diag = SampleDiagnostics::default();
        let mut sample = state.samples[1].clone();
        sample.assignments = vec![1; 6];
        let mut moves = 0;
        for _ in 0..400 {
            if let Some(stats) = update_activation(&mut sample, &data, &outlier, false, &prior, &state.latent, &mut rng, &mut diag).unwrap() {
                moves += 1;
                assert_eq!(stats.counts.iter().sum::<usize>(), 6);
                for &x in &sample.assignments {
                    assert!(x == 0 || sample.active[x as usize - 1]);
                }
            }
            assert!(sample.active.iter().any(|a| *a));
            assert_relative_eq!(sample.pi.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(moves > 0);
        assert_eq!(diag.births_accepted + diag.deaths_accepted, moves);
    }
}
