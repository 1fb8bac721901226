//! Joint-distribution ("getting it right") test of the sampler.
//!
//! Two simulators of the joint distribution of parameters and data are
//! compared. The marginal-conditional simulator draws parameters from the
//! prior and data given the parameters. The successive-conditional
//! simulator alternates one MCMC sweep (parameters given data) with fresh
//! data given the parameters. If every update leaves the posterior
//! invariant, both simulators have the same stationary distribution and the
//! z-scores of their functional means stay small.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::RngStream;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det};
use crate::mcmc::{draw_cells, draw_prior_state, McmcConfig, Mutation, Sampler};
use crate::model::{ChainState, ClusterPrior, Dataset, PriorSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub sample_sizes: Vec<usize>,
    pub iterations: usize,
    pub seed: u64,
    pub rj_enabled: bool,
    /// Batches for the batch-means variance of the MCMC functionals.
    pub batches: usize,
    #[serde(default)]
    pub mutation: Option<Mutation>,
}

impl GewekeConfig {
    pub fn new(sample_sizes: Vec<usize>, iterations: usize, seed: u64) -> Self {
        GewekeConfig {
            sample_sizes,
            iterations,
            seed,
            rj_enabled: true,
            batches: 50,
            mutation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub name: String,
    pub forward_mean: f64,
    pub forward_se: f64,
    pub mcmc_mean: f64,
    pub mcmc_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub iterations: usize,
    pub mutation: Option<Mutation>,
    pub functionals: Vec<FunctionalReport>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.functionals.iter().map(|f| f.z.abs()).fold(0.0, f64::max)
    }
}

/// Small prior used by the harness (two dimensions, two clusters).
///
/// Hyperparameters are moderate so that every functional has finite
/// variance and the sampler mixes over the activation pattern.
pub fn geweke_prior(d: usize, k: usize) -> PriorSpec {
    let eye = DMatrix::<f64>::identity(d, d);
    let clusters = (0..k)
        .map(|c| ClusterPrior {
            t: DVector::from_element(d, c as f64),
            s: &eye * 0.5,
            q: &eye * 0.3,
            h: &eye * 0.1,
            lambda: 0.5,
            n_theta: None,
            n_psi: None,
        })
        .collect();
    PriorSpec {
        clusters,
        n_theta: d as f64 + 4.0,
        n_psi: d as f64 + 2.0,
        dirichlet: vec![1.0; k + 1],
        activation_penalty: 0.5,
        nu_min: d as u32 + 2,
        outlier_mean: DVector::from_element(d, 0.5),
        outlier_cov: &eye * 4.0,
    }
}

fn ln_det(m: &DMatrix<f64>) -> f64 {
    cholesky(m, "functional").map(|c| log_det(&c)).unwrap_or(f64::NAN)
}

fn functional_names(k: usize, j: usize, d: usize) -> Vec<String> {
    let mut names = Vec::new();
    for c in 1..=k {
        for a in 0..d {
            names.push(format!("theta[{c}][{a}]"));
        }
    }
    for c in 1..=k {
        names.push(format!("logdet_sigma_theta[{c}]"));
    }
    for c in 1..=k {
        names.push(format!("logdet_psi[{c}]"));
    }
    for c in 1..=k {
        names.push(format!("nu[{c}]"));
    }
    for c in 1..=k {
        names.push(format!("active_count[{c}]"));
    }
    for s in 1..=j {
        names.push(format!("pi_outlier[{s}]"));
    }
    for c in 1..=k {
        names.push(format!("active_mu[1][{c}][0]"));
    }
    for c in 1..=k {
        names.push(format!("active_logdet_sigma[1][{c}]"));
    }
    names.push("data_mean[0]".into());
    for c in 1..=k {
        names.push(format!("theta_sq[{c}][0]"));
    }
    names
}

/// Scalar test functions of parameters and data. Component parameters enter
/// only through active components, since inactive ones are auxiliary.
fn functionals(state: &ChainState, data: &Dataset) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &state.latent {
        out.extend(l.theta.iter().copied());
    }
    for l in &state.latent {
        out.push(ln_det(&l.sigma_theta));
    }
    for l in &state.latent {
        out.push(ln_det(&l.psi));
    }
    for l in &state.latent {
        out.push(l.nu as f64);
    }
    for k in 0..state.latent.len() {
        out.push(state.samples.iter().filter(|s| s.active[k]).count() as f64);
    }
    for s in &state.samples {
        out.push(s.pi[0]);
    }
    let first = &state.samples[0];
    for k in 0..state.latent.len() {
        out.push(if first.active[k] { first.mu[k][0] } else { 0.0 });
    }
    for k in 0..state.latent.len() {
        out.push(if first.active[k] { ln_det(&first.sigma[k]) } else { 0.0 });
    }
    let pooled = data.pooled_column(0);
    out.push(pooled.iter().sum::<f64>() / pooled.len() as f64);
    for l in &state.latent {
        out.push(l.theta[0] * l.theta[0]);
    }
    out
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the mean from non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, var) = mean_and_var(&means);
    (var / batches as f64).sqrt()
}

/// Run both simulators for `config.iterations` steps and compare.
pub fn getting_it_right(prior: &PriorSpec, config: &GewekeConfig) -> Result<GewekeReport> {
    prior.validate()?;
    if config.iterations < 2 * config.batches || config.batches < 2 {
        return Err(Error::InvalidArgument("need at least two batches of two iterations".into()));
    }
    let all_active = !config.rj_enabled;
    let j = config.sample_sizes.len();
    let names = functional_names(prior.num_clusters(), j, prior.dim());

    let mut fwd_rng = RngStream::new(config.seed, 2);
    let mut forward: Vec<Vec<f64>> = vec![Vec::with_capacity(config.iterations); names.len()];
    for _ in 0..config.iterations {
        let mut state = draw_prior_state(prior, &config.sample_sizes, all_active, &mut fwd_rng)?;
        let data = draw_cells(&mut state, prior, &mut fwd_rng)?;
        for (col, v) in forward.iter_mut().zip(functionals(&state, &data)) {
            col.push(v);
        }
    }

    let mut regen_rng = RngStream::new(config.seed, 3);
    let mut init = draw_prior_state(prior, &config.sample_sizes, all_active, &mut regen_rng)?;
    let data = draw_cells(&mut init, prior, &mut regen_rng)?;
    let mut mc = McmcConfig::new(0, 1, 1, config.seed);
    mc.rj_enabled = config.rj_enabled;
    mc.workers = 1;
    mc.record_assignments = false;
    mc.mutation = config.mutation;
    let mut sampler = Sampler::new(data, prior.clone(), mc, Some(init))?;
    let mut chain: Vec<Vec<f64>> = vec![Vec::with_capacity(config.iterations); names.len()];
    for it in 0..config.iterations {
        sampler.sweep().map_err(|e| e.at_iteration(it))?;
        let data = draw_cells(sampler.state_mut(), prior, &mut regen_rng)?;
        for (col, v) in chain.iter_mut().zip(functionals(sampler.state(), &data)) {
            col.push(v);
        }
        sampler.replace_data(data)?;
    }

    let functionals = names
        .into_iter()
        .zip(forward.iter().zip(&chain))
        .map(|(name, (f, c))| {
            let (fm, fv) = mean_and_var(f);
            let fse = (fv / f.len() as f64).sqrt();
            let (cm, _) = mean_and_var(c);
            let cse = batch_means_se(c, config.batches);
            let denom = (fse * fse + cse * cse).sqrt();
            let z = if denom > 0.0 { (fm - cm) / denom } else { 0.0 };
            FunctionalReport {
                name,
                forward_mean: fm,
                forward_se: fse,
                mcmc_mean: cm,
                mcmc_se: cse,
                z,
            }
        })
        .collect();
    Ok(GewekeReport {
        iterations: config.iterations,
        mutation: config.mutation,
        functionals,
    })
}
