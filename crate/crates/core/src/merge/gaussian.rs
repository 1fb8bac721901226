use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, inv_quad_form, log_det};
use crate::model::Dataset;

use super::weights::SoftWeights;

/// Gaussian approximation of a (super-)cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    #[serde(with = "crate::serde_util::vector")]
    pub mean: DVector<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub cov: DMatrix<f64>,
    /// Share of all cells, in soft-assignment mass.
    pub weight: f64,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, weight: f64) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::Dimension(format!("mean has length {} but covariance is {}x{}", mean.len(), cov.nrows(), cov.ncols())));
        }
        if !(weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("summary weight must be nonnegative, got {weight}")));
        }
        cholesky(&cov, "summary covariance")?;
        Ok(GaussianSummary { mean, cov, weight })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Bhattacharyya distance between two Gaussians.
///
/// `(1/8) Δᵀ Σ̄⁻¹ Δ + (1/2) log(|Σ̄| / √(|Σ1||Σ2|))` with `Σ̄ = (Σ1 + Σ2)/2`.
/// Log-determinants come from Cholesky factors. The expression is
/// arranged so that identical inputs give exactly zero and swapping the
/// arguments gives exactly the same value.
pub fn bhattacharyya(g1: &GaussianSummary, g2: &GaussianSummary) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::Dimension(format!("summaries of dimension {} and {}", g1.dim(), g2.dim())));
    }
    let c1 = cholesky(&g1.cov, "bhattacharyya: first covariance")?;
    let c2 = cholesky(&g2.cov, "bhattacharyya: second covariance")?;
    let avg = (&g1.cov + &g2.cov) * 0.5;
    let ca = cholesky(&avg, "bhattacharyya: average covariance")?;
    let diff = &g1.mean - &g2.mean;
    let quad = inv_quad_form(&ca, &diff) / 8.0;
    let logdet = 0.5 * (log_det(&ca) - 0.5 * (log_det(&c1) + log_det(&c2)));
    Ok(quad + logdet)
}

/// Soft-weighted Gaussian moments of the cells of components `components`
/// (indices into the weight columns, 1..=K for latent clusters).
///
/// The covariance divides by the total weight, so a hard singleton gives the
/// maximum-likelihood covariance of its cells.
pub fn gaussian_approx(components: &[usize], weights: &SoftWeights, data: &Dataset) -> Result<GaussianSummary> {
    weights.check_against(data)?;
    if let Some(&c) = components.iter().find(|&&c| c >= weights.num_columns()) {
        return Err(Error::InvalidArgument(format!("component {c} out of range 0..{}", weights.num_columns())));
    }
    let d = data.dim();
    let mut total = 0.0;
    let mut sum = DVector::<f64>::zeros(d);
    for (j, cells) in data.samples().iter().enumerate() {
        for (i, row) in cells.iter_rows().enumerate() {
            let w = weights.mass(j, i, components);
            if w > 0.0 {
                total += w;
                for a in 0..d {
                    sum[a] += w * row[a];
                }
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!("components {components:?} carry no weight")));
    }
    let mean = sum / total;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (j, cells) in data.samples().iter().enumerate() {
        for (i, row) in cells.iter_rows().enumerate() {
            let w = weights.mass(j, i, components);
            if w > 0.0 {
                for a in 0..d {
                    let da = row[a] - mean[a];
                    for b in 0..=a {
                        cov[(a, b)] += w * da * (row[b] - mean[b]);
                    }
                }
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let weight = total / data.total_cells() as f64;
    GaussianSummary::new(mean, cov, weight)
}

/// Which covariance enters the Fisher direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherCovariance {
    /// `Σ1 + Σ2`, the same average that enters the Bhattacharyya distance.
    #[default]
    Average,
    /// Covariances weighted by the summaries' weights.
    Pooled,
}

/// Unit vector along `(Σ1 + Σ2)⁻¹ (μ1 − μ2)`.
pub fn fisher_coordinate(g1: &GaussianSummary, g2: &GaussianSummary, mode: FisherCovariance) -> Result<DVector<f64>> {
    if g1.dim() != g2.dim() {
        return Err(Error::Dimension(format!("summaries of dimension {} and {}", g1.dim(), g2.dim())));
    }
    let diff = &g1.mean - &g2.mean;
    if diff.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("equal means: the Fisher direction is undefined".into()));
    }
    let scatter = match mode {
        FisherCovariance::Average => &g1.cov + &g2.cov,
        FisherCovariance::Pooled => {
            let total = g1.weight + g2.weight;
            if !(total > 0.0) {
                return Err(Error::InvalidArgument("pooled Fisher covariance needs positive weights".into()));
            }
            (&g1.cov * g1.weight + &g2.cov * g2.weight) / total
        }
    };
    let chol = cholesky(&scatter, "fisher scatter")?;
    let dir = chol.solve(&diff);
    let norm = dir.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numerical("Fisher direction has no finite length".into()));
    }
    Ok(dir / norm)
}
