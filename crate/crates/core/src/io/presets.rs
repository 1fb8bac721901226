//! Prior presets for scaled data (pooled 1% and 99% percentiles at 0 and 1).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterPrior, Dataset, PriorSpec};

/// Marker order of the lymphocyte panel.
pub const LYMPHOCYTE_MARKERS: [&str; 4] = ["CD4", "CD8", "CD3", "CD19"];

/// Expression pattern of one known population on [`LYMPHOCYTE_MARKERS`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expression {
    High,
    Low,
    Unspecified,
}

use Expression::{High as P, Low as N, Unspecified as U};

/// B cells, helper T, cytotoxic T, CD4−CD8− T and NK cells.
pub const LYMPHOCYTE_POPULATIONS: [(&str, [Expression; 4]); 5] = [
    ("B cells", [U, U, N, P]),
    ("helper T cells", [P, N, P, N]),
    ("cytotoxic T cells", [N, P, P, N]),
    ("CD4-CD8- T cells", [N, N, P, N]),
    ("NK cells", [U, U, N, N]),
];

/// Settings shared by the presets. Locations are on the scaled axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresetSettings {
    pub high: f64,
    pub low: f64,
    pub unspecified: f64,
    /// Prior variance of a location coordinate fixed by the pattern.
    pub informative_var: f64,
    /// Prior variance of a free location coordinate.
    pub vague_var: f64,
    /// Typical within-component standard deviation.
    pub component_sd: f64,
    /// Typical spread of component means around their cluster.
    pub spread_sd: f64,
    pub activation_penalty: f64,
}

impl Default for PresetSettings {
    fn default() -> Self {
        PresetSettings {
            high: 0.8,
            low: 0.1,
            unspecified: 0.5,
            informative_var: 0.01,
            vague_var: 1.0,
            component_sd: 0.08,
            spread_sd: 0.04,
            activation_penalty: 5.0,
        }
    }
}

/// `n`-th point (1-based) of the Halton sequence in `d` dimensions.
fn halton(n: usize, d: usize) -> Vec<f64> {
    const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (0..d)
        .map(|a| {
            let base = PRIMES[a % PRIMES.len()];
            let (mut f, mut r, mut i) = (1.0, 0.0, n);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Well-spread locations in `[0.1, 0.9]^d` for clusters without prior
/// knowledge, so that they do not start on top of each other.
pub fn spread_locations(count: usize, d: usize) -> Vec<DVector<f64>> {
    (1..=count).map(|n| DVector::from_iterator(d, halton(n, d).into_iter().map(|u| 0.1 + 0.8 * u))).collect()
}

/// `k` vague clusters at spread locations.
pub fn vague_preset(data: &Dataset, k: usize, settings: &PresetSettings) -> Result<PriorSpec> {
    if k == 0 {
        return Err(Error::Config("vague preset needs at least one cluster".into()));
    }
    let centres = spread_locations(k, data.dim());
    let mut prior = PriorSpec::vague(
        &centres,
        settings.vague_var,
        settings.component_sd,
        settings.spread_sd,
        PriorSpec::default_outlier(data),
    );
    prior.activation_penalty = settings.activation_penalty;
    Ok(prior)
}

/// The five lymphocyte populations with pattern-derived locations, plus
/// `extra` vague clusters. Requires the four markers of
/// [`LYMPHOCYTE_MARKERS`] (any order, case-insensitive).
pub fn lymphocyte_preset(data: &Dataset, extra: usize, settings: &PresetSettings) -> Result<PriorSpec> {
    let names: Vec<String> = data.marker_names().iter().map(|m| m.to_ascii_uppercase()).collect();
    let columns = LYMPHOCYTE_MARKERS
        .iter()
        .map(|m| {
            names
                .iter()
                .position(|n| n == m)
                .ok_or_else(|| Error::Config(format!("lymphocyte preset needs marker {m}, data has [{}]", names.join(", "))))
        })
        .collect::<Result<Vec<_>>>()?;
    if data.dim() != LYMPHOCYTE_MARKERS.len() {
        return Err(Error::Config(format!("lymphocyte preset needs exactly 4 markers, data has {}", data.dim())));
    }
    let d = data.dim();
    let mut centres: Vec<DVector<f64>> = Vec::new();
    let mut variances: Vec<DVector<f64>> = Vec::new();
    for (_, pattern) in LYMPHOCYTE_POPULATIONS {
        let mut t = DVector::zeros(d);
        let mut s = DVector::zeros(d);
        for (e, &col) in pattern.iter().zip(&columns) {
            let (loc, var) = match e {
                Expression::High => (settings.high, settings.informative_var),
                Expression::Low => (settings.low, settings.informative_var),
                Expression::Unspecified => (settings.unspecified, settings.vague_var),
            };
            t[col] = loc;
            s[col] = var;
        }
        centres.push(t);
        variances.push(s);
    }
    for t in spread_locations(extra, d) {
        centres.push(t);
        variances.push(DVector::from_element(d, settings.vague_var));
    }
    let mut prior = PriorSpec::vague(
        &centres,
        settings.vague_var,
        settings.component_sd,
        settings.spread_sd,
        PriorSpec::default_outlier(data),
    );
    for (c, v) in prior.clusters.iter_mut().zip(&variances) {
        c.s = DMatrix::from_diagonal(v);
    }
    prior.activation_penalty = settings.activation_penalty;
    prior.validate()?;
    Ok(prior)
}

/// Clusters of [`lymphocyte_preset`] with a fixed location coordinate.
pub fn is_informative(c: &ClusterPrior, settings: &PresetSettings) -> bool {
    c.s.diagonal().iter().any(|&v| v == settings.informative_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellMatrix;

    fn panel(markers: &[&str]) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| (0..markers.len()).map(|m| ((i * (m + 3)) % 17) as f64 / 17.0).collect()).collect();
        Dataset::new(
            vec![CellMatrix::from_rows(&rows).unwrap()],
            markers.iter().map(|s| s.to_string()).collect(),
            vec!["s".into()],
        )
        .unwrap()
    }

    #[test]
    fn seventeen_clusters_with_table_pattern() {
        let data = panel(&["CD4", "CD8", "CD3", "CD19"]);
        let p = lymphocyte_preset(&data, 12, &PresetSettings::default()).unwrap();
        assert_eq!(p.num_clusters(), 17);
        // helper T: CD4+ CD8- CD3+ CD19-
        assert_eq!(p.clusters[1].t.as_slice(), &[0.8, 0.1, 0.8, 0.1]);
        // B cells: CD4 and CD8 unspecified with a wide prior
        assert_eq!(p.clusters[0].t.as_slice(), &[0.5, 0.5, 0.1, 0.8]);
        assert_eq!(p.clusters[0].s[(0, 0)], 1.0);
        assert_eq!(p.clusters[0].s[(3, 3)], 0.01);
        let s = PresetSettings::default();
        assert_eq!(p.clusters.iter().filter(|c| is_informative(c, &s)).count(), 5);
    }

    #[test]
    fn marker_order_is_matched_by_name() {
        let data = panel(&["cd19", "CD3", "CD8", "CD4"]);
        let p = lymphocyte_preset(&data, 0, &PresetSettings::default()).unwrap();
        assert_eq!(p.clusters[1].t.as_slice(), &[0.1, 0.8, 0.1, 0.8]);
        assert!(lymphocyte_preset(&panel(&["CD4", "CD8", "CD3"]), 0, &PresetSettings::default()).is_err());
    }

    #[test]
    fn spread_locations_are_distinct() {
        let locs = spread_locations(12, 4);
        for a in 0..12 {
            assert!(locs[a].iter().all(|&v| (0.1..=0.9).contains(&v)));
            for b in 0..a {
                assert!((&locs[a] - &locs[b]).norm() > 0.05);
            }
        }
        let p = vague_preset(&panel(&["a", "b"]), 3, &PresetSettings::default()).unwrap();
        p.validate().unwrap();
    }
}
