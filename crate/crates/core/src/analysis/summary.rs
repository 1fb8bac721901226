//! Posterior summaries of a trace and recovery tables against known truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::Trace;

use super::generate::GroundTruth;

/// Central credible interval levels.
pub const INTERVAL_LEVELS: (f64, f64) = (0.025, 0.975);

/// Linear-interpolation quantile (type 7) of ascending `sorted`.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("interval of zero draws".into()));
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Interval {
            mean,
            lower: empirical_quantile(&sorted, INTERVAL_LEVELS.0),
            upper: empirical_quantile(&sorted, INTERVAL_LEVELS.1),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub theta: Vec<Interval>,
    /// `Ψ / (ν − d − 1)`, row-major `d × d`.
    pub latent_cov: Vec<Interval>,
    pub sigma_theta: Vec<Interval>,
    pub nu: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    /// Per component; summarized over draws where it is active, `None` if never.
    pub mu: Vec<Option<Vec<Interval>>>,
    pub sigma: Vec<Option<Vec<Interval>>>,
    /// Index 0 is the outlier weight.
    pub pi: Vec<Interval>,
    pub activation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub draws: usize,
    pub dim: usize,
    pub latent: Vec<LatentSummary>,
    pub samples: Vec<SampleSummary>,
}

/// One row of the long-format summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub k: usize,
    pub j: Option<usize>,
    pub coordinate: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn coord(d: usize, idx: usize, matrix: bool) -> String {
    if matrix {
        format!("{}_{}", idx / d, idx % d)
    } else {
        idx.to_string()
    }
}

fn intervals(columns: Vec<Vec<f64>>) -> Result<Vec<Interval>> {
    columns.iter().map(|c| Interval::from_draws(c)).collect()
}

/// Trace means, central 95% intervals and activation frequencies.
pub fn summarize(trace: &Trace) -> Result<PosteriorSummary> {
    if trace.draws.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty trace".into()));
    }
    let d = trace.dim;
    let k = trace.num_clusters;
    let draws = &trace.draws;
    let latent = (0..k)
        .map(|c| {
            let theta = (0..d).map(|a| draws.iter().map(|t| t.latent[c].theta[a]).collect()).collect();
            let cov = (0..d * d)
                .map(|i| draws.iter().map(|t| t.latent[c].latent_covariance()[(i / d, i % d)]).collect())
                .collect();
            let st = (0..d * d).map(|i| draws.iter().map(|t| t.latent[c].sigma_theta[(i / d, i % d)]).collect()).collect();
            let nu: Vec<f64> = draws.iter().map(|t| t.latent[c].nu as f64).collect();
            Ok(LatentSummary {
                theta: intervals(theta)?,
                latent_cov: intervals(cov)?,
                sigma_theta: intervals(st)?,
                nu: Interval::from_draws(&nu)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = (0..trace.num_samples())
        .map(|j| {
            let mut mu = Vec::with_capacity(k);
            let mut sigma = Vec::with_capacity(k);
            for c in 0..k {
                let on: Vec<_> = draws.iter().map(|t| &t.samples[j]).filter(|s| s.active[c]).collect();
                if on.is_empty() {
                    mu.push(None);
                    sigma.push(None);
                    continue;
                }
                mu.push(Some(intervals((0..d).map(|a| on.iter().map(|s| s.mu[c][a]).collect()).collect())?));
                sigma.push(Some(intervals(
                    (0..d * d).map(|i| on.iter().map(|s| s.sigma[c][(i / d, i % d)]).collect()).collect(),
                )?));
            }
            let pi = intervals((0..=k).map(|c| draws.iter().map(|t| t.samples[j].pi[c]).collect()).collect())?;
            let activation = (0..k).map(|c| trace.activation_probability(j, c)).collect();
            Ok(SampleSummary { mu, sigma, pi, activation })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        draws: draws.len(),
        dim: d,
        latent,
        samples,
    })
}

impl PosteriorSummary {
    /// Long-format rows; `k` is 1-based (0 is the outlier for `pi`), `j` 0-based.
    pub fn rows(&self) -> Vec<SummaryRow> {
        let d = self.dim;
        let mut out = Vec::new();
        let mut push = |parameter: &str, k: usize, j: Option<usize>, coordinate: String, iv: &Interval| {
            out.push(SummaryRow {
                parameter: parameter.into(),
                k,
                j,
                coordinate,
                mean: iv.mean,
                lower: iv.lower,
                upper: iv.upper,
            })
        };
        for (c, l) in self.latent.iter().enumerate() {
            for (a, iv) in l.theta.iter().enumerate() {
                push("theta", c + 1, None, coord(d, a, false), iv);
            }
            for (i, iv) in l.latent_cov.iter().enumerate() {
                push("latent_cov", c + 1, None, coord(d, i, true), iv);
            }
            for (i, iv) in l.sigma_theta.iter().enumerate() {
                push("sigma_theta", c + 1, None, coord(d, i, true), iv);
            }
            push("nu", c + 1, None, String::new(), &l.nu);
        }
        for (j, s) in self.samples.iter().enumerate() {
            for (c, iv) in s.pi.iter().enumerate() {
                push("pi", c, Some(j), String::new(), iv);
            }
            for c in 0..s.activation.len() {
                let p = s.activation[c];
                push("active", c + 1, Some(j), String::new(), &Interval { mean: p, lower: p, upper: p });
                if let Some(mu) = &s.mu[c] {
                    for (a, iv) in mu.iter().enumerate() {
                        push("mu", c + 1, Some(j), coord(d, a, false), iv);
                    }
                }
                if let Some(sigma) = &s.sigma[c] {
                    for (i, iv) in sigma.iter().enumerate() {
                        push("sigma", c + 1, Some(j), coord(d, i, true), iv);
                    }
                }
            }
        }
        out
    }
}

/// Estimate against truth for one scalar parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub parameter: String,
    pub k: usize,
    pub j: Option<usize>,
    pub coordinate: String,
    pub truth: f64,
    pub estimate: f64,
    /// `estimate − truth`, and the interval ends relative to the truth.
    pub difference: f64,
    pub lower_difference: f64,
    pub upper_difference: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub rows: Vec<RecoveryRow>,
}

impl RecoveryTable {
    /// `(inside, total)` for one parameter family.
    pub fn coverage(&self, parameter: &str) -> (usize, usize) {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.parameter == parameter).collect();
        (rows.iter().filter(|r| r.covered).count(), rows.len())
    }
}

/// Compare a summary with the generating parameters: θ and the upper
/// triangle of the latent covariances per cluster, and μ and the upper
/// triangle of Σ for components present both in truth and in some draw.
pub fn recovery_table(summary: &PosteriorSummary, truth: &GroundTruth) -> Result<RecoveryTable> {
    let d = summary.dim;
    if truth.latent.len() != summary.latent.len() || truth.samples.len() != summary.samples.len() {
        return Err(Error::Dimension("truth and summary describe different designs".into()));
    }
    let mut rows = Vec::new();
    let mut push = |parameter: &str, k: usize, j: Option<usize>, coordinate: String, truth: f64, iv: &Interval| {
        rows.push(RecoveryRow {
            parameter: parameter.into(),
            k,
            j,
            coordinate,
            truth,
            estimate: iv.mean,
            difference: iv.mean - truth,
            lower_difference: iv.lower - truth,
            upper_difference: iv.upper - truth,
            covered: iv.contains(truth),
        })
    };
    for (c, (l, t)) in summary.latent.iter().zip(&truth.latent).enumerate() {
        for a in 0..d {
            push("theta", c + 1, None, a.to_string(), t.theta[a], &l.theta[a]);
        }
        let tc = t.latent_covariance();
        for a in 0..d {
            for b in a..d {
                push("latent_cov", c + 1, None, format!("{a}_{b}"), tc[(a, b)], &l.latent_cov[a * d + b]);
            }
        }
    }
    for (j, (s, t)) in summary.samples.iter().zip(&truth.samples).enumerate() {
        for c in 0..s.mu.len() {
            if !t.active[c] {
                continue;
            }
            if let (Some(mu), Some(sigma)) = (&s.mu[c], &s.sigma[c]) {
                for a in 0..d {
                    push("mu", c + 1, Some(j), a.to_string(), t.mu[c][a], &mu[a]);
                }
                for a in 0..d {
                    for b in a..d {
                        push("sigma", c + 1, Some(j), format!("{a}_{b}"), t.sigma[c][(a, b)], &sigma[a * d + b]);
                    }
                }
            }
        }
    }
    Ok(RecoveryTable { rows })
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| (0..n - lag).map(|i| (xs[i] - mean) * (xs[i + lag] - mean)).sum::<f64>() / (n as f64 * var);
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}
