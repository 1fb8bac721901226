use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::Trace;

/// Posterior-mean population proportions per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSizes {
    /// `J × M`: entry `(j, m)` is the posterior mean of the summed weights
    /// of the clusters in population `m + 1`.
    #[serde(with = "crate::serde_util::matrix")]
    pub sizes: DMatrix<f64>,
    /// Posterior mean outlier weight per sample.
    pub outlier: Vec<f64>,
}

/// `partition[k - 1]` is the 1-based population of cluster k.
pub fn population_sizes(trace: &Trace, partition: &[usize]) -> Result<PopulationSizes> {
    if trace.draws.is_empty() {
        return Err(Error::InvalidArgument("population sizes need at least one draw".into()));
    }
    if partition.len() != trace.num_clusters {
        return Err(Error::Dimension(format!("partition covers {} clusters, trace has {}", partition.len(), trace.num_clusters)));
    }
    let m = partition.iter().copied().max().unwrap_or(0);
    if partition.contains(&0) {
        return Err(Error::InvalidArgument("population ids are 1-based".into()));
    }
    let j = trace.num_samples();
    let n = trace.draws.len() as f64;
    let mut sizes = DMatrix::zeros(j, m);
    let mut outlier = vec![0.0; j];
    for draw in &trace.draws {
        for (s, sd) in draw.samples.iter().enumerate() {
            outlier[s] += sd.pi[0];
            for (k, &p) in partition.iter().enumerate() {
                sizes[(s, p - 1)] += sd.pi[k + 1];
            }
        }
    }
    sizes /= n;
    for o in outlier.iter_mut() {
        *o /= n;
    }
    Ok(PopulationSizes { sizes, outlier })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    #[serde(with = "crate::serde_util::vector")]
    pub center: DVector<f64>,
    /// `J × r` projections of the centred rows on the components.
    #[serde(with = "crate::serde_util::matrix")]
    pub scores: DMatrix<f64>,
    /// `M × r` unit-length principal axes (right singular vectors).
    #[serde(with = "crate::serde_util::matrix")]
    pub components: DMatrix<f64>,
    /// Axes scaled by `σ / √(J − 1)`, for biplot arrows.
    #[serde(with = "crate::serde_util::matrix")]
    pub loadings: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    /// Undo the projection with every component retained.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = &self.scores * self.components.transpose();
        for mut row in x.row_iter_mut() {
            row += self.center.transpose();
        }
        x
    }
}

/// Principal components of the column-centred matrix via SVD.
///
/// Each axis is signed so that its largest-magnitude entry is positive.
pub fn pca_biplot(x: &DMatrix<f64>) -> Result<Pca> {
    let (j, m) = x.shape();
    if j < 2 || m < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least a 2 x 2 matrix, got {j} x {m}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("PCA input has a non-finite entry".into()));
    }
    let center = DVector::from_iterator(m, x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= center.transpose();
    }
    let svd = xc.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let scale = sv.first().copied().unwrap_or(0.0);
    if !(scale > f64::EPSILON * (j.max(m) as f64) * xc.amax().max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidArgument("PCA input has rank 0 after centring".into()));
    }
    let r = sv.len();
    let mut components = DMatrix::zeros(m, r);
    for (c, &i) in order.iter().enumerate() {
        let mut axis = v_t.row(i).transpose();
        let pivot = axis.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            axis = -axis;
        }
        components.set_column(c, &axis);
    }
    let scores = &xc * &components;
    let denom = ((j - 1) as f64).sqrt();
    let mut loadings = components.clone();
    for (c, s) in sv.iter().enumerate() {
        loadings.column_mut(c).scale_mut(s / denom);
    }
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let explained_variance_ratio = sv.iter().map(|s| s * s / total).collect();
    Ok(Pca {
        center,
        scores,
        components,
        loadings,
        singular_values: sv,
        explained_variance_ratio,
    })
}
