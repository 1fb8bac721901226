//! The sampler: sweeps, chain driver and trace recording.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{draw_categorical, draw_mvn, RngStream};
use crate::error::{Error, Result};
use crate::model::{log_prior, log_sum_exp, CellMatrix, ChainState, Dataset, GaussianFactor, LatentState, PriorSpec, SampleState};

use super::activation::update_activation;
use super::config::{McmcConfig, LATENT_STREAM, PREDICTIVE_STREAM, SAMPLE_STREAM_OFFSET};
use super::updates::{
    update_assignments, update_component_params, update_latent_layer, update_nu, update_pi, LatentDiagnostics,
    SampleDiagnostics,
};

/// Per-sample parameters recorded at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    pub mu: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub pi: Vec<f64>,
    pub active: Vec<bool>,
}

/// One synthetic cell from the posterior predictive; `sample` is `None` for
/// the pooled draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDraw {
    pub sample: Option<usize>,
    pub cell: DVector<f64>,
}

/// Everything recorded at one thinned production iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDraw {
    pub iteration: usize,
    pub latent: Vec<LatentState>,
    pub samples: Vec<SampleDraw>,
    pub log_posterior: f64,
    pub predictive: Vec<PredictiveDraw>,
}

/// Run-level counters and timings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sample: SampleDiagnostics,
    pub latent: LatentDiagnostics,
    /// Pairs of latent clusters whose posterior-mean locations are closer to
    /// each other's prior means than to their own.
    pub label_swaps: Vec<(usize, usize)>,
    pub wall_time_seconds: f64,
}

impl Diagnostics {
    pub fn nu_acceptance_rates(&self) -> Vec<f64> {
        self.latent
            .nu_proposed
            .iter()
            .zip(&self.latent.nu_accepted)
            .map(|(&p, &a)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }
}

/// Thinned draws and accumulators of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub dim: usize,
    pub num_clusters: usize,
    pub sample_sizes: Vec<usize>,
    pub draws: Vec<TraceDraw>,
    /// Per sample, row-major `n_j × (K + 1)` counts of how often each cell
    /// was assigned to each component during production.
    pub assignment_counts: Vec<Vec<u32>>,
    /// Production iterations contributing to `assignment_counts`.
    pub counted_iterations: usize,
    pub diagnostics: Diagnostics,
}

impl Trace {
    pub fn num_samples(&self) -> usize {
        self.sample_sizes.len()
    }

    /// Fraction of recorded draws in which component `k` of sample `j` is active.
    pub fn activation_probability(&self, j: usize, k: usize) -> f64 {
        if self.draws.is_empty() {
            return 0.0;
        }
        let on = self.draws.iter().filter(|d| d.samples[j].active[k]).count();
        on as f64 / self.draws.len() as f64
    }

    pub fn log_posterior_series(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.log_posterior).collect()
    }
}

struct Worker {
    rng: RngStream,
    diag: SampleDiagnostics,
    counts: Vec<usize>,
    tally: Vec<u32>,
}

/// Per-sample block: assignments, weights, component parameters and one
/// activation move, all driven by the sample's own random stream.
#[allow(clippy::too_many_arguments)]
fn sample_block(
    sample: &mut SampleState,
    worker: &mut Worker,
    cells: &CellMatrix,
    prior: &PriorSpec,
    latent: &[LatentState],
    outlier: &GaussianFactor,
    config: &McmcConfig,
    tally: bool,
) -> Result<()> {
    let assigned = update_assignments(sample, cells, outlier, config.force_outlier, &mut worker.rng)?;
    if tally {
        let width = sample.mu.len() + 1;
        for (i, &x) in sample.assignments.iter().enumerate() {
            worker.tally[i * width + x as usize] += 1;
        }
    }
    update_pi(sample, &assigned.counts, &prior.dirichlet, &mut worker.rng)?;
    update_component_params(sample, &assigned.stats, latent, config.mutation, &mut worker.rng, &mut worker.diag)?;
    let mut counts = assigned.counts;
    if config.rj_enabled {
        let moved = update_activation(
            sample,
            cells,
            outlier,
            config.force_outlier,
            prior,
            latent,
            &mut worker.rng,
            &mut worker.diag,
        )?;
        if let Some(stats) = moved {
            counts = stats.counts;
        }
    }
    worker.counts = counts;
    Ok(())
}

/// Owns the chain state, the data and one random stream per sample plus one
/// for the latent layer.
pub struct Sampler {
    data: Dataset,
    prior: PriorSpec,
    config: McmcConfig,
    state: ChainState,
    workers: Vec<Worker>,
    latent_rng: RngStream,
    predictive_rng: RngStream,
    latent_diag: LatentDiagnostics,
    outlier: GaussianFactor,
    pool: rayon::ThreadPool,
    tally: bool,
    counted_iterations: usize,
    iteration: usize,
}

impl Sampler {
    /// Build a sampler, starting from `init` or from [`ChainState::initial`].
    pub fn new(data: Dataset, prior: PriorSpec, config: McmcConfig, init: Option<ChainState>) -> Result<Self> {
        prior.validate()?;
        config.validate(data.num_samples())?;
        if prior.dim() != data.dim() {
            return Err(Error::Dimension(format!(
                "prior has dimension {}, data has {}",
                prior.dim(),
                data.dim()
            )));
        }
        let mut state = init.unwrap_or_else(|| ChainState::initial(&prior, &data));
        if state.samples.len() != data.num_samples() {
            return Err(Error::Dimension("initial state and data disagree on J".into()));
        }
        for (s, n) in state.samples.iter_mut().zip(data.sizes()) {
            s.assignments.resize(n, 0);
        }
        state.validate(&prior)?;
        let k = prior.num_clusters();
        let workers = data
            .sizes()
            .iter()
            .enumerate()
            .map(|(j, &n)| Worker {
                rng: RngStream::new(config.seed, SAMPLE_STREAM_OFFSET + j as u64),
                diag: SampleDiagnostics::default(),
                counts: vec![0; k + 1],
                tally: vec![0; n * (k + 1)],
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let outlier = GaussianFactor::new(&prior.outlier_mean, &prior.outlier_cov)?;
        Ok(Sampler {
            latent_rng: RngStream::new(config.seed, LATENT_STREAM),
            predictive_rng: RngStream::new(config.seed, PREDICTIVE_STREAM),
            latent_diag: LatentDiagnostics {
                nu_proposed: vec![0; k],
                nu_accepted: vec![0; k],
                ..Default::default()
            },
            data,
            prior,
            config,
            state,
            workers,
            outlier,
            pool,
            tally: false,
            counted_iterations: 0,
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState {
        &mut self.state
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Swap in new data with the same sample sizes (used when the data are
    /// regenerated between sweeps).
    pub fn replace_data(&mut self, data: Dataset) -> Result<()> {
        if data.sizes() != self.data.sizes() || data.dim() != self.data.dim() {
            return Err(Error::Dimension("replacement data must keep the sample sizes".into()));
        }
        self.data = data;
        Ok(())
    }

    /// Start or stop accumulating per-cell assignment counts.
    pub fn set_tally(&mut self, on: bool) {
        self.tally = on;
    }

    /// One full sweep: the per-sample blocks in parallel, then the latent layer.
    pub fn sweep(&mut self) -> Result<()> {
        let iteration = self.iteration;
        let tally = self.tally;
        let (data, prior, config, outlier) = (&self.data, &self.prior, &self.config, &self.outlier);
        let latent = &self.state.latent;
        let samples = &mut self.state.samples;
        let workers = &mut self.workers;
        self.pool
            .install(|| {
                samples
                    .par_iter_mut()
                    .zip(workers.par_iter_mut())
                    .enumerate()
                    .try_for_each(|(j, (s, w))| {
                        sample_block(s, w, data.sample(j), prior, latent, outlier, config, tally)
                    })
            })
            .map_err(|e| e.at_iteration(iteration))?;
        self.finish_sweep()
    }

    /// Sweep with the per-sample blocks run sequentially in `order`. Because
    /// every sample owns its stream, the result matches [`Sampler::sweep`].
    pub fn sweep_in_order(&mut self, order: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.state.samples.len()];
        for &j in order {
            if j >= seen.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidArgument("order must be a permutation of the samples".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("order must be a permutation of the samples".into()));
        }
        let iteration = self.iteration;
        for &j in order {
            sample_block(
                &mut self.state.samples[j],
                &mut self.workers[j],
                self.data.sample(j),
                &self.prior,
                &self.state.latent,
                &self.outlier,
                &self.config,
                self.tally,
            )
            .map_err(|e| e.at_iteration(iteration))?;
        }
        self.finish_sweep()
    }

    fn finish_sweep(&mut self) -> Result<()> {
        let iteration = self.iteration;
        let rj = self.config.rj_enabled;
        update_latent_layer(&mut self.state, &self.prior, rj, &mut self.latent_rng, &mut self.latent_diag)
            .and_then(|_| {
                update_nu(
                    &mut self.state,
                    &self.prior,
                    rj,
                    self.config.nu_proposal_halfwidth,
                    &mut self.latent_rng,
                    &mut self.latent_diag,
                )
            })
            .map_err(|e| e.at_iteration(iteration))?;
        if self.tally {
            self.counted_iterations += 1;
        }
        self.iteration += 1;
        Ok(())
    }

    /// Cell counts per component (index 0 = outlier) from the last sweep.
    pub fn last_counts(&self, j: usize) -> &[usize] {
        &self.workers[j].counts
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut sample = SampleDiagnostics::default();
        for w in &self.workers {
            sample.absorb(&w.diag);
        }
        Diagnostics {
            sample,
            latent: self.latent_diag.clone(),
            label_swaps: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    /// Observed-data log posterior of the current state (up to a constant).
    pub fn log_posterior(&self) -> Result<f64> {
        let prior = &self.prior;
        let state = &self.state;
        let data = &self.data;
        let outlier = &self.outlier;
        let per_sample = self.pool.install(|| {
            (0..state.samples.len())
                .into_par_iter()
                .map(|j| sample_log_likelihood(&state.samples[j], data.sample(j), outlier))
                .collect::<Result<Vec<f64>>>()
        })?;
        Ok(log_prior(state, prior)? + per_sample.iter().sum::<f64>())
    }

    fn record(&mut self) -> Result<TraceDraw> {
        let predictive = self.predictive_draws()?;
        Ok(TraceDraw {
            iteration: self.iteration,
            latent: self.state.latent.clone(),
            samples: self
                .state
                .samples
                .iter()
                .map(|s| SampleDraw {
                    mu: s.mu.clone(),
                    sigma: s.sigma.clone(),
                    pi: s.pi.clone(),
                    active: s.active.clone(),
                })
                .collect(),
            log_posterior: self.log_posterior()?,
            predictive,
        })
    }

    fn predictive_draws(&mut self) -> Result<Vec<PredictiveDraw>> {
        let mut out = Vec::new();
        let requested = self.config.predictive.samples.clone();
        for j in requested {
            let cell = draw_predictive_cell(&self.state.samples[j], &self.prior, &mut self.predictive_rng)?;
            out.push(PredictiveDraw { sample: Some(j), cell });
        }
        if self.config.predictive.pooled {
            let total = self.data.total_cells();
            let mut pick = self.predictive_rng.index(total);
            let mut j = 0;
            for (idx, n) in self.data.sizes().into_iter().enumerate() {
                if pick < n {
                    j = idx;
                    break;
                }
                pick -= n;
            }
            let cell = draw_predictive_cell(&self.state.samples[j], &self.prior, &mut self.predictive_rng)?;
            out.push(PredictiveDraw { sample: None, cell });
        }
        Ok(out)
    }

    fn tallies(&self) -> Vec<Vec<u32>> {
        self.workers.iter().map(|w| w.tally.clone()).collect()
    }
}

/// One synthetic cell from the sample's mixture, outlier included.
pub fn draw_predictive_cell(sample: &SampleState, prior: &PriorSpec, rng: &mut RngStream) -> Result<DVector<f64>> {
    let log_pi: Vec<f64> = sample.pi.iter().map(|p| p.ln()).collect();
    match draw_categorical(&log_pi, rng)? {
        0 => draw_mvn(&prior.outlier_mean, &prior.outlier_cov, rng),
        x => draw_mvn(&sample.mu[x - 1], &sample.sigma[x - 1], rng),
    }
}

fn sample_log_likelihood(sample: &SampleState, cells: &CellMatrix, outlier: &GaussianFactor) -> Result<f64> {
    let mut factors = Vec::new();
    let mut offsets = Vec::new();
    if sample.pi[0] > 0.0 {
        factors.push(outlier.clone());
        offsets.push(sample.pi[0].ln());
    }
    for k in 0..sample.mu.len() {
        if sample.active[k] && sample.pi[k + 1] > 0.0 {
            factors.push(GaussianFactor::new(&sample.mu[k], &sample.sigma[k])?);
            offsets.push(sample.pi[k + 1].ln());
        }
    }
    let mut scratch = vec![0.0; cells.cols()];
    let mut terms = vec![0.0; factors.len()];
    let mut total = 0.0;
    for y in cells.iter_rows() {
        for (t, (f, o)) in terms.iter_mut().zip(factors.iter().zip(&offsets)) {
            *t = o + f.log_density_with(y, &mut scratch);
        }
        total += log_sum_exp(&terms);
    }
    Ok(total)
}

/// Pairs `(k, l)` whose posterior-mean locations sit closer to each other's
/// prior means than to their own.
pub fn label_swaps(draws: &[TraceDraw], prior: &PriorSpec) -> Vec<(usize, usize)> {
    if draws.is_empty() {
        return Vec::new();
    }
    let k = prior.num_clusters();
    let means: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut m = DVector::zeros(prior.dim());
            for d in draws {
                m += &d.latent[c].theta;
            }
            m / draws.len() as f64
        })
        .collect();
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let own = (&means[a] - &prior.clusters[a].t).norm() + (&means[b] - &prior.clusters[b].t).norm();
            let swapped = (&means[a] - &prior.clusters[b].t).norm() + (&means[b] - &prior.clusters[a].t).norm();
            if swapped < own {
                out.push((a + 1, b + 1));
            }
        }
    }
    out
}

/// Run `burn_in + production` sweeps and record every `thin`-th production
/// state.
pub fn run_chain(data: &Dataset, prior: &PriorSpec, config: &McmcConfig) -> Result<Trace> {
    run_chain_from(data, prior, config, None)
}

/// [`run_chain`] from a given initial state.
pub fn run_chain_from(data: &Dataset, prior: &PriorSpec, config: &McmcConfig, init: Option<ChainState>) -> Result<Trace> {
    let start = Instant::now();
    let mut sampler = Sampler::new(data.clone(), prior.clone(), config.clone(), init)?;
    for _ in 0..config.burn_in {
        sampler.sweep()?;
    }
    sampler.set_tally(config.record_assignments);
    let mut draws = Vec::with_capacity(config.num_draws());
    for it in 0..config.production {
        sampler.sweep()?;
        if (it + 1) % config.thin == 0 {
            let draw = sampler.record().map_err(|e| e.at_iteration(sampler.iteration()))?;
            if !draw.log_posterior.is_finite() {
                return Err(Error::Numerical("non-finite log posterior".into()).at_iteration(draw.iteration));
            }
            draws.push(draw);
        }
        if (it + 1) % 1000 == 0 {
            log::debug!("production iteration {}", it + 1);
        }
    }
    let mut diagnostics = sampler.diagnostics();
    diagnostics.label_swaps = label_swaps(&draws, prior);
    diagnostics.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(Trace {
        dim: data.dim(),
        num_clusters: prior.num_clusters(),
        sample_sizes: data.sizes(),
        draws,
        assignment_counts: if config.record_assignments { sampler.tallies() } else { Vec::new() },
        counted_iterations: sampler.counted_iterations,
        diagnostics,
    })
}
