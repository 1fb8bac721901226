use serde::{Deserialize, Serialize};

use crate::analysis::empirical_quantile;
use crate::error::{Error, Result};
use crate::model::{CellMatrix, Dataset};

/// Smallest pooled cell count accepted by [`fit_scaling`].
pub const MIN_SCALING_CELLS: usize = 100;

/// Per-marker affine map sending the pooled 1% and 99% percentiles to 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingTransform {
    pub markers: Vec<String>,
    pub q01: Vec<f64>,
    pub q99: Vec<f64>,
}

/// Pooled percentiles with linear interpolation between order statistics.
pub fn fit_scaling(data: &Dataset) -> Result<ScalingTransform> {
    if data.total_cells() < MIN_SCALING_CELLS {
        return Err(Error::Data(format!(
            "scaling needs at least {MIN_SCALING_CELLS} pooled cells, got {}",
            data.total_cells()
        )));
    }
    let mut q01 = Vec::with_capacity(data.dim());
    let mut q99 = Vec::with_capacity(data.dim());
    for (m, name) in data.marker_names().iter().enumerate() {
        let mut col = data.pooled_column(m);
        col.sort_by(f64::total_cmp);
        let lo = empirical_quantile(&col, 0.01);
        let hi = empirical_quantile(&col, 0.99);
        if !(hi > lo) {
            return Err(Error::Data(format!("marker {name} is constant between its 1% and 99% percentiles")));
        }
        q01.push(lo);
        q99.push(hi);
    }
    Ok(ScalingTransform {
        markers: data.marker_names().to_vec(),
        q01,
        q99,
    })
}

/// `y' = (y − q01) / (q99 − q01)` for every sample. Refuses data that has
/// already been scaled.
pub fn apply_scaling(data: &Dataset, t: &ScalingTransform) -> Result<Dataset> {
    if data.is_scaled() {
        return Err(Error::Data("dataset is already scaled; scaling twice is not allowed".into()));
    }
    if t.markers != data.marker_names() {
        return Err(Error::Data(format!(
            "transform markers [{}] do not match data markers [{}]",
            t.markers.join(", "),
            data.marker_names().join(", ")
        )));
    }
    let d = data.dim();
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let mut v = s.values().to_vec();
            for (i, x) in v.iter_mut().enumerate() {
                let m = i % d;
                *x = (*x - t.q01[m]) / (t.q99[m] - t.q01[m]);
            }
            CellMatrix::new(s.rows(), d, v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples, data.marker_names().to_vec(), data.sample_ids().to_vec())?.mark_scaled())
}
