//! Maximum-likelihood Gaussian mixtures fitted to one sample at a time by EM,
//! as a baseline for the hierarchical model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::RngStream;
use crate::error::{Error, Result};
use crate::model::{CellMatrix, GaussianFactor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub restarts: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            restarts: 10,
            tolerance: 1e-8,
            max_iterations: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub weights: Vec<f64>,
    #[serde(with = "crate::serde_util::vectors")]
    pub means: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_util::matrices")]
    pub covariances: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood before each M-step of the winning restart.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Restarts that hit a singular covariance and were redone with jitter.
    pub degenerate_restarts: usize,
}

impl EmFit {
    /// Most probable component of each row.
    pub fn classify(&self, x: &CellMatrix) -> Result<Vec<usize>> {
        let factors = self
            .means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| GaussianFactor::new(m, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(x.iter_rows()
            .map(|row| {
                (0..self.weights.len())
                    .map(|k| self.weights[k].ln() + factors[k].log_density(row))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, l)| if l > best.1 { (k, l) } else { best })
                    .0
            })
            .collect())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance to the nearest chosen centre.
fn kmeans_pp(x: &CellMatrix, k: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
    let n = x.rows();
    let mut centres = vec![rng.index(n)];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(centres[0]))).collect();
    while centres.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.index(n)
        };
        centres.push(pick);
        for i in 0..n {
            dist[i] = dist[i].min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centres.iter().map(|&i| DVector::from_row_slice(x.row(i))).collect()
}

struct Attempt {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    history: Vec<f64>,
    converged: bool,
}

fn pooled_cov(x: &CellMatrix) -> DMatrix<f64> {
    let d = x.cols();
    let n = x.rows() as f64;
    let mut mean = DVector::zeros(d);
    for row in x.iter_rows() {
        mean += DVector::from_row_slice(row);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for row in x.iter_rows() {
        let v = DVector::from_row_slice(row) - &mean;
        cov += &v * v.transpose();
    }
    cov / n
}

/// One EM run from a k-means++ start. `ridge` is added to every covariance
/// after each M-step; it is zero unless an earlier attempt degenerated.
fn attempt(x: &CellMatrix, k: usize, ridge: f64, config: &EmConfig, rng: &mut RngStream) -> Result<Attempt> {
    let n = x.rows();
    let d = x.cols();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut means = kmeans_pp(x, k, rng);
    let mut covs = vec![pooled_cov(x) + &eye * ridge; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; n * k];
    let mut history = Vec::new();
    let mut converged = false;
    let rows: Vec<DVector<f64>> = x.iter_rows().map(DVector::from_row_slice).collect();
    for _ in 0..config.max_iterations {
        let factors = means
            .iter()
            .zip(&covs)
            .map(|(m, c)| GaussianFactor::new(m, c))
            .collect::<Result<Vec<_>>>()?;
        let mut ll = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            let r = &mut resp[i * k..(i + 1) * k];
            let mut top = f64::NEG_INFINITY;
            for c in 0..k {
                r[c] = weights[c].ln() + factors[c].log_density(row);
                top = top.max(r[c]);
            }
            let sum: f64 = r.iter().map(|l| (l - top).exp()).sum();
            let lse = top + sum.ln();
            ll += lse;
            for l in r.iter_mut() {
                *l = (*l - lse).exp();
            }
        }
        if let Some(&prev) = history.last() {
            history.push(ll);
            if ll - prev < config.tolerance {
                converged = true;
                break;
            }
        } else {
            history.push(ll);
        }
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if !(nk > 1e-12) {
                return Err(Error::not_spd(format!("em component {c} lost all its mass")));
            }
            let mut mean = DVector::zeros(d);
            for (i, v) in rows.iter().enumerate() {
                mean += v * resp[i * k + c];
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (i, v) in rows.iter().enumerate() {
                let dv = v - &mean;
                cov += &dv * dv.transpose() * resp[i * k + c];
            }
            covs[c] = cov / nk + &eye * ridge;
            means[c] = mean;
            weights[c] = nk / n as f64;
        }
    }
    Ok(Attempt {
        weights,
        means,
        covs,
        history,
        converged,
    })
}

/// Best of `config.restarts` EM runs, by final log-likelihood.
pub fn em_baseline(x: &CellMatrix, k: usize, config: &EmConfig, rng: &mut RngStream) -> Result<EmFit> {
    let d = x.cols();
    if k == 0 || x.rows() <= k * d {
        return Err(Error::InvalidArgument(format!("EM with K = {k} needs more than K·d = {} rows, got {}", k * d, x.rows())));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidArgument("EM needs at least one restart".into()));
    }
    let scale = pooled_cov(x).trace() / d as f64;
    let mut best: Option<Attempt> = None;
    let mut degenerate = 0;
    for _ in 0..config.restarts {
        let mut ridge = 0.0;
        let result = loop {
            match attempt(x, k, ridge, config, rng) {
                Ok(a) => break Some(a),
                Err(Error::NotSpd(_)) if ridge < scale => {
                    degenerate += 1;
                    ridge = if ridge == 0.0 { 1e-6 * scale } else { ridge * 10.0 };
                }
                Err(Error::NotSpd(_)) => break None,
                Err(e) => return Err(e),
            }
        };
        if let Some(a) = result {
            let better = match &best {
                None => true,
                Some(b) => a.history.last() > b.history.last(),
            };
            if better {
                best = Some(a);
            }
        }
    }
    let a = best.ok_or_else(|| Error::Numerical("every EM restart degenerated".into()))?;
    Ok(EmFit {
        log_likelihood: *a.history.last().unwrap(),
        weights: a.weights,
        means: a.means,
        covariances: a.covs,
        history: a.history,
        converged: a.converged,
        degenerate_restarts: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::draw_mvn;

    fn blob(rng: &mut RngStream, centres: &[[f64; 2]], n: usize) -> CellMatrix {
        let cov = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| draw_mvn(&DVector::from_row_slice(&centres[i % centres.len()]), &cov, rng).unwrap().as_slice().to_vec())
            .collect();
        CellMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_gaussian_is_the_mle() {
        let mut rng = RngStream::new(16, 0);
        let x = blob(&mut rng, &[[1.0, -1.0]], 500);
        let fit = em_baseline(&x, 1, &EmConfig::default(), &mut rng).unwrap();
        let mut mean = DVector::zeros(2);
        for r in x.iter_rows() {
            mean += DVector::from_row_slice(r);
        }
        mean /= 500.0;
        approx::assert_abs_diff_eq!(fit.means[0], mean, epsilon = 1e-6);
        approx::assert_abs_diff_eq!(fit.covariances[0], pooled_cov(&x), epsilon = 1e-6);
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn two_clusters_recovered_and_likelihood_monotone() {
        let mut rng = RngStream::new(17, 0);
        let x = blob(&mut rng, &[[0.0, 0.0], [5.0, 3.0]], 800);
        let fit = em_baseline(&x, 2, &EmConfig::default(), &mut rng).unwrap();
        let mut means = fit.means.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((means[0][0]).abs() < 0.1 && (means[0][1]).abs() < 0.1);
        assert!((means[1][0] - 5.0).abs() < 0.1 && (means[1][1] - 3.0).abs() < 0.1);
        assert!(fit.converged);
        assert!(fit.history.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{:?}", fit.history);
        let labels = fit.classify(&x).unwrap();
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn too_few_rows() {
        let mut rng = RngStream::new(18, 0);
        let x = blob(&mut rng, &[[0.0, 0.0]], 4);
        assert!(em_baseline(&x, 2, &EmConfig::default(), &mut rng).is_err());
    }
}
