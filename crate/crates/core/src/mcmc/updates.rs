//! Gibbs conditionals and the per-sample and latent-layer updates.
//!
//! The `*_conditional` functions return the parameters of each full
//! conditional without drawing from it, so they can be checked against
//! closed-form scalar posteriors. The `update_*` functions draw.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{
    draw_categorical_inplace, draw_dirichlet, draw_inverse_wishart, draw_mvn, draw_wishart_inv_scale, RngStream,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_jittered, ln_multigamma, log_det, normal_posterior, spd_inverse, symmetrize};
use crate::model::{CellMatrix, ChainState, GaussianFactor, LatentState, PriorSpec, SampleState};

use super::config::Mutation;

/// Counters kept by each per-sample worker.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub jitter_events: u64,
    pub rejected_updates: u64,
    pub births_proposed: u64,
    pub births_accepted: u64,
    pub deaths_proposed: u64,
    pub deaths_accepted: u64,
}

impl SampleDiagnostics {
    pub fn absorb(&mut self, other: &SampleDiagnostics) {
        self.jitter_events += other.jitter_events;
        self.rejected_updates += other.rejected_updates;
        self.births_proposed += other.births_proposed;
        self.births_accepted += other.births_accepted;
        self.deaths_proposed += other.deaths_proposed;
        self.deaths_accepted += other.deaths_accepted;
    }
}

/// Counters kept by the latent-layer update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentDiagnostics {
    pub jitter_events: u64,
    pub rejected_updates: u64,
    pub nu_proposed: Vec<u64>,
    pub nu_accepted: Vec<u64>,
}

/// Count, sum and scatter of the cells assigned to one component, stored
/// relative to a reference point (the component mean at assignment time) so
/// the scatter about a nearby point loses no precision.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    count: usize,
    reference: Vec<f64>,
    sum: Vec<f64>,
    scatter: Vec<f64>,
}

impl SuffStats {
    pub fn new(reference: &DVector<f64>) -> Self {
        let d = reference.len();
        SuffStats {
            count: 0,
            reference: reference.as_slice().to_vec(),
            sum: vec![0.0; d],
            scatter: vec![0.0; d * d],
        }
    }

    pub fn from_points<'a>(reference: &DVector<f64>, points: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = Self::new(reference);
        let mut buf = vec![0.0; reference.len()];
        for p in points {
            s.push(p, &mut buf);
        }
        s
    }

    /// Add one cell; `buf` is scratch of length `d`.
    #[inline]
    pub fn push(&mut self, y: &[f64], buf: &mut [f64]) {
        let d = self.reference.len();
        for a in 0..d {
            buf[a] = y[a] - self.reference[a];
            self.sum[a] += buf[a];
        }
        for a in 0..d {
            let row = &mut self.scatter[a * d..a * d + a + 1];
            for (b, r) in row.iter_mut().enumerate() {
                *r += buf[a] * buf[b];
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    /// Sample mean of the assigned cells, `None` when empty.
    pub fn mean(&self) -> Option<DVector<f64>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(DVector::from_fn(self.dim(), |a, _| self.reference[a] + self.sum[a] / n))
    }

    /// `Σ_i (y_i - p)(y_i - p)ᵀ` over the assigned cells.
    pub fn scatter_about(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.count as f64;
        let delta: Vec<f64> = (0..d).map(|a| p[a] - self.reference[a]).collect();
        let mut out = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..=a {
                let v = self.scatter[a * d + b] - self.sum[a] * delta[b] - delta[a] * self.sum[b]
                    + n * delta[a] * delta[b];
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }
}

/// Result of an assignment sweep over one sample.
#[derive(Clone, Debug)]
pub struct AssignmentStats {
    /// Cells per component, index 0 = outlier.
    pub counts: Vec<usize>,
    /// Sufficient statistics of components `1..=K`.
    pub stats: Vec<SuffStats>,
}

// ---- conditional parameters ----

/// Normal conditional of `μ_jk` given its covariance and assigned cells.
/// With no cells this is the latent prior `N(θ_k, Σ_θk)`.
pub fn mu_conditional(
    theta: &DVector<f64>,
    sigma_theta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    stats: &SuffStats,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match stats.mean() {
        None => Ok((theta.clone(), sigma_theta.clone())),
        Some(ybar) => normal_posterior(theta, sigma_theta, &ybar, &(sigma / stats.count() as f64)),
    }
}

/// Inverse-Wishart conditional `(scale, dof)` of `Σ_jk` given a mean.
pub fn sigma_conditional(psi: &DMatrix<f64>, nu: f64, stats: &SuffStats, mu: &DVector<f64>) -> (DMatrix<f64>, f64) {
    (symmetrize(&(psi + stats.scatter_about(mu))), nu + stats.count() as f64)
}

/// Dirichlet parameters of `π_j` over the outlier and the active components,
/// in that order.
pub fn pi_conditional(dirichlet: &[f64], counts: &[usize], active: &[bool]) -> Vec<f64> {
    let mut alpha = vec![dirichlet[0] + counts[0] as f64];
    for (k, _) in active.iter().enumerate().filter(|(_, a)| **a) {
        alpha.push(dirichlet[k + 1] + counts[k + 1] as f64);
    }
    alpha
}

/// Normal conditional of `θ_k` given the contributing component means.
pub fn theta_conditional(
    t: &DVector<f64>,
    s: &DMatrix<f64>,
    sigma_theta: &DMatrix<f64>,
    mus: &[&DVector<f64>],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mus.is_empty() {
        return Ok((t.clone(), s.clone()));
    }
    let m = mus.len() as f64;
    let mut mean = DVector::zeros(t.len());
    for mu in mus {
        mean += *mu;
    }
    mean /= m;
    normal_posterior(t, s, &mean, &(sigma_theta / m))
}

/// Inverse-Wishart conditional `(scale, dof)` of `Σ_θk`.
pub fn sigma_theta_conditional(
    q: &DMatrix<f64>,
    n_theta: f64,
    theta: &DVector<f64>,
    mus: &[&DVector<f64>],
) -> (DMatrix<f64>, f64) {
    let mut scale = q.clone();
    for mu in mus {
        let r = *mu - theta;
        scale += &r * r.transpose();
    }
    (symmetrize(&scale), n_theta + mus.len() as f64)
}

/// Wishart conditional of `Ψ_k` as `(inverse scale, dof)`: the scale is the
/// inverse of `H_k⁻¹ + Σ_j Σ_jk⁻¹`.
pub fn psi_conditional(h_inv: &DMatrix<f64>, n_psi: f64, nu: u32, sigma_invs: &[DMatrix<f64>]) -> (DMatrix<f64>, f64) {
    let mut inv_scale = h_inv.clone();
    for si in sigma_invs {
        inv_scale += si;
    }
    (symmetrize(&inv_scale), n_psi + sigma_invs.len() as f64 * nu as f64)
}

/// `ln` of the Metropolis ratio for moving `ν_k` from `nu` to `proposal`,
/// given `m` contributing component covariances with summed log-determinant
/// `sum_log_det_sigma`.
pub fn nu_log_ratio(
    nu: u32,
    proposal: u32,
    psi_log_det: f64,
    d: usize,
    m: usize,
    sum_log_det_sigma: f64,
    lambda: f64,
) -> f64 {
    let dnu = proposal as f64 - nu as f64;
    let per_sample = 0.5 * dnu * (psi_log_det - d as f64 * 2f64.ln());
    m as f64 * (per_sample - (ln_multigamma(d, 0.5 * proposal as f64) - ln_multigamma(d, 0.5 * nu as f64)))
        - 0.5 * dnu * sum_log_det_sigma
        - lambda * dnu
}

/// Reflect an integer proposal below `nu_min` back into the support.
///
/// The map `x -> 2 ν_min - 1 - x` mirrors about `ν_min - 1/2`, which keeps
/// the proposal kernel symmetric.
pub fn reflect_nu(candidate: i64, nu_min: u32) -> u32 {
    let m = nu_min as i64;
    if candidate >= m {
        candidate as u32
    } else {
        (2 * m - 1 - candidate) as u32
    }
}

// ---- guarded draws ----

/// Return `m` or its jittered version when it fails to factor; `None` when
/// even jitter does not help.
fn guarded(m: &DMatrix<f64>, jitter_events: &mut u64, context: &str) -> Option<DMatrix<f64>> {
    match cholesky_jittered(m, context) {
        Ok((_, 0)) => Some(m.clone()),
        Ok((c, _)) => {
            *jitter_events += 1;
            let l = c.l();
            Some(symmetrize(&(&l * l.transpose())))
        }
        Err(_) => None,
    }
}

fn guarded_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    jitter: &mut u64,
    rng: &mut RngStream,
) -> Option<Result<DVector<f64>>> {
    guarded(cov, jitter, "normal conditional").map(|c| draw_mvn(mean, &c, rng))
}

fn guarded_iw(scale: &DMatrix<f64>, dof: f64, jitter: &mut u64, rng: &mut RngStream) -> Option<Result<DMatrix<f64>>> {
    guarded(scale, jitter, "inverse Wishart conditional").map(|c| draw_inverse_wishart(&c, dof, rng))
}

// ---- per-sample block ----

/// Draw every cell's component label and collect sufficient statistics.
///
/// Log weights are `ln π_jk + ln N(y; μ_jk, Σ_jk)` over the active
/// components plus the outlier. With `force_outlier` every cell is pinned to
/// the outlier and no randomness is consumed.
pub fn update_assignments(
    sample: &mut SampleState,
    cells: &CellMatrix,
    outlier: &GaussianFactor,
    force_outlier: bool,
    rng: &mut RngStream,
) -> Result<AssignmentStats> {
    let k = sample.mu.len();
    let d = cells.cols();
    let n = cells.rows();
    let mut stats: Vec<SuffStats> = sample.mu.iter().map(SuffStats::new).collect();
    let mut counts = vec![0usize; k + 1];
    sample.assignments.resize(n, 0);
    if force_outlier {
        sample.assignments.iter_mut().for_each(|x| *x = 0);
        counts[0] = n;
        return Ok(AssignmentStats { counts, stats });
    }

    let mut labels = Vec::with_capacity(k + 1);
    let mut factors = Vec::with_capacity(k + 1);
    let mut offsets = Vec::with_capacity(k + 1);
    if sample.pi[0] > 0.0 {
        labels.push(0u32);
        factors.push(outlier.clone());
        offsets.push(sample.pi[0].ln());
    }
    for c in 0..k {
        if sample.active[c] && sample.pi[c + 1] > 0.0 {
            labels.push(c as u32 + 1);
            factors.push(GaussianFactor::new(&sample.mu[c], &sample.sigma[c])?);
            offsets.push(sample.pi[c + 1].ln());
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidState("sample has no component with positive weight".into()));
    }

    let mut lw = vec![0.0; labels.len()];
    let mut scratch = vec![0.0; d];
    for i in 0..n {
        let y = cells.row(i);
        let mut best = f64::NEG_INFINITY;
        for c in 0..labels.len() {
            let v = offsets[c] + factors[c].log_density_with(y, &mut scratch);
            lw[c] = v;
            best = best.max(v);
        }
        if !best.is_finite() {
            return Err(Error::Numerical(format!("cell {} has no finite component weight", i + 1)));
        }
        let idx = draw_categorical_inplace(&mut lw, rng.uniform());
        let label = labels[idx];
        sample.assignments[i] = label;
        counts[label as usize] += 1;
        if label > 0 {
            stats[label as usize - 1].push(y, &mut scratch);
        }
    }
    Ok(AssignmentStats { counts, stats })
}

/// Draw `π_j` from its Dirichlet conditional; inactive weights are exactly 0.
pub fn update_pi(sample: &mut SampleState, counts: &[usize], dirichlet: &[f64], rng: &mut RngStream) -> Result<()> {
    let alpha = pi_conditional(dirichlet, counts, &sample.active);
    let draw = draw_dirichlet(&alpha, rng)?;
    sample.pi[0] = draw[0];
    let mut it = draw[1..].iter();
    for k in 0..sample.active.len() {
        sample.pi[k + 1] = if sample.active[k] { *it.next().unwrap() } else { 0.0 };
    }
    Ok(())
}

/// Gibbs update of `(μ_jk, Σ_jk)` for active components; inactive ones are
/// refreshed from the latent prior. A draw that fails numerically leaves
/// the old values in place and is counted.
pub fn update_component_params(
    sample: &mut SampleState,
    stats: &[SuffStats],
    latent: &[LatentState],
    mutation: Option<Mutation>,
    rng: &mut RngStream,
    diag: &mut SampleDiagnostics,
) -> Result<()> {
    for (c, l) in latent.iter().enumerate() {
        let d = l.theta.len() as f64;
        let (mean, cov) = if sample.active[c] {
            mu_conditional(&l.theta, &l.sigma_theta, &sample.sigma[c], &stats[c])?
        } else {
            (l.theta.clone(), l.sigma_theta.clone())
        };
        let mu = match guarded_mvn(&mean, &cov, &mut diag.jitter_events, rng) {
            Some(r) => r?,
            None => {
                diag.rejected_updates += 1;
                continue;
            }
        };
        let (scale, dof) = if sample.active[c] {
            let (scale, dof) = sigma_conditional(&l.psi, l.nu as f64, &stats[c], &mu);
            match mutation {
                Some(Mutation::DropSigmaPriorDof) => (scale, stats[c].count() as f64 + d + 1.0),
                None => (scale, dof),
            }
        } else {
            (l.psi.clone(), l.nu as f64)
        };
        let sigma = match guarded_iw(&scale, dof, &mut diag.jitter_events, rng) {
            Some(r) => r?,
            None => {
                diag.rejected_updates += 1;
                continue;
            }
        };
        if cholesky(&sigma, "component covariance draw").is_err() {
            diag.rejected_updates += 1;
            continue;
        }
        sample.mu[c] = mu;
        sample.sigma[c] = sigma;
    }
    Ok(())
}

// ---- latent block ----

fn contributing(state: &ChainState, k: usize, rj_enabled: bool) -> Vec<usize> {
    (0..state.samples.len())
        .filter(|&j| !rj_enabled || state.samples[j].active[k])
        .collect()
}

/// Conjugate draws of `θ_k`, `Σ_θk` and `Ψ_k` for every latent cluster.
pub fn update_latent_layer(
    state: &mut ChainState,
    prior: &PriorSpec,
    rj_enabled: bool,
    rng: &mut RngStream,
    diag: &mut LatentDiagnostics,
) -> Result<()> {
    for k in 0..state.latent.len() {
        let js = contributing(state, k, rj_enabled);
        let cp = &prior.clusters[k];
        let mus: Vec<&DVector<f64>> = js.iter().map(|&j| &state.samples[j].mu[k]).collect();

        let (mean, cov) = theta_conditional(&cp.t, &cp.s, &state.latent[k].sigma_theta, &mus)?;
        match guarded_mvn(&mean, &cov, &mut diag.jitter_events, rng) {
            Some(r) => state.latent[k].theta = r?,
            None => diag.rejected_updates += 1,
        }

        let (scale, dof) = sigma_theta_conditional(&cp.q, prior.n_theta(k), &state.latent[k].theta, &mus);
        match guarded_iw(&scale, dof, &mut diag.jitter_events, rng) {
            Some(r) => state.latent[k].sigma_theta = r?,
            None => diag.rejected_updates += 1,
        }

        let h_inv = spd_inverse(&cholesky(&cp.h, "H")?);
        let sigma_invs = js
            .iter()
            .map(|&j| Ok(spd_inverse(&cholesky(&state.samples[j].sigma[k], "component covariance")?)))
            .collect::<Result<Vec<_>>>()?;
        let (inv_scale, dof) = psi_conditional(&h_inv, prior.n_psi(k), state.latent[k].nu, &sigma_invs);
        match guarded(&inv_scale, &mut diag.jitter_events, "psi conditional") {
            Some(p) => state.latent[k].psi = draw_wishart_inv_scale(&p, dof, rng)?,
            None => diag.rejected_updates += 1,
        }
    }
    Ok(())
}

/// Metropolis update of every `ν_k` with a symmetric uniform proposal on
/// `ν ± 1..=h`, reflected at `ν_min`.
pub fn update_nu(
    state: &mut ChainState,
    prior: &PriorSpec,
    rj_enabled: bool,
    halfwidth: u32,
    rng: &mut RngStream,
    diag: &mut LatentDiagnostics,
) -> Result<()> {
    let k_total = state.latent.len();
    diag.nu_proposed.resize(k_total, 0);
    diag.nu_accepted.resize(k_total, 0);
    let h = halfwidth.max(1) as usize;
    for k in 0..k_total {
        let js = contributing(state, k, rj_enabled);
        let mut sum_log_det = 0.0;
        for &j in &js {
            sum_log_det += log_det(&cholesky(&state.samples[j].sigma[k], "component covariance")?);
        }
        let step = rng.index(2 * h);
        let delta = if step < h { step as i64 - h as i64 } else { step as i64 - h as i64 + 1 };
        let nu = state.latent[k].nu;
        let proposal = reflect_nu(nu as i64 + delta, prior.nu_min);
        diag.nu_proposed[k] += 1;
        let psi_log_det = log_det(&cholesky(&state.latent[k].psi, "psi")?);
        let log_ratio = nu_log_ratio(
            nu,
            proposal,
            psi_log_det,
            prior.dim(),
            js.len(),
            sum_log_det,
            prior.clusters[k].lambda,
        );
        if rng.open_uniform().ln() < log_ratio {
            state.latent[k].nu = proposal;
            diag.nu_accepted[k] += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn suff_stats_scatter_matches_direct() {
        let pts = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.25], [2.0, 2.0]];
        let s = SuffStats::from_points(&v(&[1.5, 0.7]), pts.iter().map(|p| &p[..]));
        let p = v(&[0.3, -0.2]);
        let mut direct = DMatrix::zeros(2, 2);
        for q in &pts {
            let r = v(q) - &p;
            direct += &r * r.transpose();
        }
        assert_relative_eq!(s.scatter_about(&p), direct, epsilon = 1e-12);
        assert_relative_eq!(s.mean().unwrap(), v(&[1.625, 0.8125]), epsilon = 1e-15);
    }

    #[test]
    fn scalar_normal_inverse_gamma_conjugacy() {
        // d = 1: μ | σ², y ~ N((θ/τ² + Σy/σ²) / (1/τ² + n/σ²), 1 / (1/τ² + n/σ²))
        // σ² | μ, y ~ InvGamma((ν + n)/2, (ψ + Σ(y - μ)²)/2)
        let ys = [0.3, 1.1, -0.4, 0.9, 2.2];
        let (theta, tau2, sigma2, psi, nu) = (0.5, 0.8, 0.6, 1.3, 5.0);
        let stats = SuffStats::from_points(&v(&[0.0]), ys.iter().map(std::slice::from_ref));
        let (mean, cov) = mu_conditional(&v(&[theta]), &m1(tau2), &m1(sigma2), &stats).unwrap();
        let n = ys.len() as f64;
        let sum: f64 = ys.iter().sum();
        let prec = 1.0 / tau2 + n / sigma2;
        assert_relative_eq!(mean[0], (theta / tau2 + sum / sigma2) / prec, epsilon = 1e-10);
        assert_relative_eq!(cov[(0, 0)], 1.0 / prec, epsilon = 1e-10);

        let mu = 0.7;
        let (scale, dof) = sigma_conditional(&m1(psi), nu, &stats, &v(&[mu]));
        let ss: f64 = ys.iter().map(|y| (y - mu) * (y - mu)).sum();
        assert_relative_eq!(scale[(0, 0)], psi + ss, epsilon = 1e-10);
        assert_eq!(dof, nu + n);
    }

    #[test]
    fn no_data_conditionals_are_priors() {
        let stats = SuffStats::new(&v(&[0.0, 0.0]));
        let theta = v(&[0.1, 0.2]);
        let st = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let (mean, cov) = mu_conditional(&theta, &st, &DMatrix::identity(2, 2), &stats).unwrap();
        assert_eq!(mean, theta);
        assert_eq!(cov, st);
        let psi = DMatrix::identity(2, 2) * 2.0;
        let (scale, dof) = sigma_conditional(&psi, 7.0, &stats, &mean);
        assert_eq!(scale, psi);
        assert_eq!(dof, 7.0);
        let (tm, tc) = theta_conditional(&theta, &st, &psi, &[]).unwrap();
        assert_eq!((tm, tc), (theta.clone(), st.clone()));
        let (inv, dof) = psi_conditional(&psi, 4.0, 9, &[]);
        assert_eq!((inv, dof), (psi, 4.0));
    }

    #[test]
    fn scalar_latent_conditionals() {
        let mus = [v(&[0.2]), v(&[0.5]), v(&[-0.1])];
        let refs: Vec<&DVector<f64>> = mus.iter().collect();
        let (t, s, st) = (0.0, 2.0, 0.3);
        let (mean, cov) = theta_conditional(&v(&[t]), &m1(s), &m1(st), &refs).unwrap();
        let prec = 1.0 / s + 3.0 / st;
        assert_relative_eq!(mean[0], (t / s + 0.6 / st) / prec, epsilon = 1e-10);
        assert_relative_eq!(cov[(0, 0)], 1.0 / prec, epsilon = 1e-10);

        let theta = 0.1;
        let (scale, dof) = sigma_theta_conditional(&m1(0.4), 4.0, &v(&[theta]), &refs);
        let ss: f64 = mus.iter().map(|m| (m[0] - theta).powi(2)).sum();
        assert_relative_eq!(scale[(0, 0)], 0.4 + ss, epsilon = 1e-10);
        assert_eq!(dof, 7.0);

        // d = 1: Ψ | σ² ~ Gamma(shape (n_Ψ + mν)/2, rate (1/h + Σ 1/σ²_j)/2)
        let (h, n_psi, nu) = (0.5, 3.0, 6u32);
        let sigmas = [0.4, 0.9];
        let invs: Vec<DMatrix<f64>> = sigmas.iter().map(|s| m1(1.0 / s)).collect();
        let (inv_scale, dof) = psi_conditional(&m1(1.0 / h), n_psi, nu, &invs);
        let rate = 0.5 * (1.0 / h + 1.0 / 0.4 + 1.0 / 0.9);
        assert_relative_eq!(0.5 * inv_scale[(0, 0)], rate, epsilon = 1e-10);
        assert_relative_eq!(0.5 * dof, 0.5 * (n_psi + 2.0 * nu as f64), epsilon = 1e-10);
    }

    #[test]
    fn dirichlet_conditional_over_active() {
        let alpha = pi_conditional(&[0.5, 1.0, 2.0, 3.0], &[4, 10, 0, 7], &[true, false, true]);
        assert_eq!(alpha, vec![4.5, 11.0, 10.0]);
    }

    #[test]
    fn nu_ratio_matches_inverse_wishart_difference() {
        use crate::model::log_inverse_wishart;
        let psi = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
        let sigmas = [
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]),
            DMatrix::from_row_slice(2, 2, &[0.9, -0.2, -0.2, 0.6]),
        ];
        let lambda = 0.3;
        let (nu, prop) = (7u32, 9u32);
        let mut expected = -lambda * (prop as f64 - nu as f64);
        let mut sld = 0.0;
        for s in &sigmas {
            expected += log_inverse_wishart(s, &psi, prop as f64).unwrap() - log_inverse_wishart(s, &psi, nu as f64).unwrap();
            sld += s.determinant().ln();
        }
        let got = nu_log_ratio(nu, prop, psi.determinant().ln(), 2, 2, sld, lambda);
        assert_relative_eq!(got, expected, epsilon = 1e-10);
    }

    #[test]
    fn nu_reflection() {
        assert_eq!(reflect_nu(5, 4), 5);
        assert_eq!(reflect_nu(3, 4), 4);
        assert_eq!(reflect_nu(2, 4), 5);
        assert_eq!(reflect_nu(-1, 4), 8);
    }

    fn two_component_sample(pi: Vec<f64>, active: Vec<bool>) -> SampleState {
        SampleState {
            mu: vec![v(&[0.0, 0.0]), v(&[10.0, 10.0])],
            sigma: vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            pi,
            assignments: vec![],
            active,
        }
    }

    fn broad_outlier() -> GaussianFactor {
        GaussianFactor::new(&v(&[5.0, 5.0]), &(DMatrix::identity(2, 2) * 100.0)).unwrap()
    }

    #[test]
    fn single_active_component_takes_every_cell() {
        let mut s = two_component_sample(vec![0.0, 1.0, 0.0], vec![true, false]);
        let cells = CellMatrix::from_rows(&[vec![0.1, 0.3], vec![9.0, 9.0], vec![-3.0, 4.0]]).unwrap();
        let mut rng = RngStream::new(1, 16);
        let out = update_assignments(&mut s, &cells, &broad_outlier(), false, &mut rng).unwrap();
        assert_eq!(s.assignments, vec![1, 1, 1]);
        assert_eq!(out.counts, vec![0, 3, 0]);
    }

    #[test]
    fn cell_at_mean_of_separated_component() {
        // posterior weight of component 1 for a cell at μ_1 is 1 / (1 + e^{-100} + ...)
        let mut s = two_component_sample(vec![1.0 / 3.0; 3], vec![true, true]);
        let cells = CellMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let outlier = GaussianFactor::new(&v(&[5.0, 5.0]), &(DMatrix::identity(2, 2) * 1e4)).unwrap();
        let mut rng = RngStream::new(2, 16);
        let hits = (0..5000)
            .filter(|_| {
                update_assignments(&mut s, &cells, &outlier, false, &mut rng).unwrap();
                s.assignments[0] == 1
            })
            .count();
        assert!(hits as f64 / 5000.0 > 0.999);
    }

    #[test]
    fn counts_partition_the_sample() {
        let mut s = two_component_sample(vec![0.2, 0.4, 0.4], vec![true, true]);
        let mut rng = RngStream::new(3, 16);
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 11) as f64, (i % 7) as f64]).collect();
        let cells = CellMatrix::from_rows(&rows).unwrap();
        let out = update_assignments(&mut s, &cells, &broad_outlier(), false, &mut rng).unwrap();
        assert_eq!(out.counts.iter().sum::<usize>(), 200);
        assert_eq!(out.stats[0].count() + out.stats[1].count(), 200 - out.counts[0]);
    }

    #[test]
    fn forced_outlier_assignment() {
        let mut s = two_component_sample(vec![0.2, 0.4, 0.4], vec![true, true]);
        let cells = CellMatrix::from_rows(&[vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap();
        let mut rng = RngStream::new(3, 16);
        let out = update_assignments(&mut s, &cells, &broad_outlier(), true, &mut rng).unwrap();
        assert_eq!(s.assignments, vec![0, 0]);
        assert_eq!(out.counts, vec![2, 0, 0]);
    }

    #[test]
    fn pi_update_respects_activation_and_counts() {
        let mut s = two_component_sample(vec![0.5, 0.5, 0.0], vec![true, false]);
        let mut rng = RngStream::new(4, 16);
        let n = 20_000;
        let mut mean = 0.0;
        for _ in 0..n {
            update_pi(&mut s, &[10, 100_000, 0], &[1.0, 1.0, 1.0], &mut rng).unwrap();
            assert_eq!(s.pi[2], 0.0);
            assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            mean += s.pi[1];
        }
        mean /= n as f64;
        let expected: f64 = 100_001.0 / 100_012.0;
        let sd = (expected * (1.0 - expected) / 100_013.0).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd / (n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn uniform_dirichlet_without_counts() {
        let mut s = two_component_sample(vec![0.2, 0.4, 0.4], vec![true, true]);
        let mut rng = RngStream::new(5, 16);
        let n = 30_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            update_pi(&mut s, &[0, 0, 0], &[1.0, 1.0, 1.0], &mut rng).unwrap();
            for c in 0..3 {
                mean[c] += s.pi[c] / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn large_count_mu_posterior_tracks_sample_mean() {
        // 1e5 cells: the conditional mean of μ is within 1% of the data mean
        let mut rng = RngStream::new(6, 16);
        let truth = v(&[2.0, -1.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let pts: Vec<Vec<f64>> = (0..100_000)
            .map(|_| draw_mvn(&truth, &sigma, &mut rng).unwrap().as_slice().to_vec())
            .collect();
        let stats = SuffStats::from_points(&v(&[0.0, 0.0]), pts.iter().map(|p| p.as_slice()));
        let (mean, cov) = mu_conditional(&v(&[0.0, 0.0]), &DMatrix::identity(2, 2), &sigma, &stats).unwrap();
        let draws = 2000;
        let mut avg = DVector::zeros(2);
        for _ in 0..draws {
            avg += draw_mvn(&mean, &cov, &mut rng).unwrap();
        }
        avg /= draws as f64;
        let ybar = stats.mean().unwrap();
        for a in 0..2 {
            assert!((avg[a] - ybar[a]).abs() < 0.01 * ybar[a].abs());
        }
    }
}
