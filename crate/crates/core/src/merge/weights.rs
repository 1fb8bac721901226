use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::Trace;
use crate::model::Dataset;

/// Per-cell soft assignment weights. Column 0 is the outlier component.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftWeights {
    columns: usize,
    /// Per sample, row-major `n_j × columns`.
    samples: Vec<Vec<f64>>,
}

impl SoftWeights {
    pub fn new(columns: usize, samples: Vec<Vec<f64>>) -> Result<Self> {
        if columns == 0 {
            return Err(Error::InvalidArgument("soft weights need at least one column".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.len() % columns != 0 {
                return Err(Error::Dimension(format!("sample {j}: {} weights is not a multiple of {columns}", s.len())));
            }
            if s.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidArgument(format!("sample {j}: weights must be finite and nonnegative")));
            }
        }
        Ok(SoftWeights { columns, samples })
    }

    pub fn num_columns(&self) -> usize {
        self.columns
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn num_cells(&self, j: usize) -> usize {
        self.samples[j].len() / self.columns
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.samples[j]
    }

    pub fn row(&self, j: usize, i: usize) -> &[f64] {
        &self.samples[j][i * self.columns..(i + 1) * self.columns]
    }

    /// Summed weight of cell `i` of sample `j` over `columns`.
    pub fn mass(&self, j: usize, i: usize, columns: &[usize]) -> f64 {
        let row = self.row(j, i);
        columns.iter().map(|&c| row[c]).sum()
    }

    /// One-hot weights on each cell's most probable column (lowest index on ties).
    pub fn hardened(&self) -> SoftWeights {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut out = vec![0.0; s.len()];
                for (i, row) in s.chunks(self.columns).enumerate() {
                    let mut best = 0;
                    for c in 1..self.columns {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    out[i * self.columns + best] = 1.0;
                }
                out
            })
            .collect();
        SoftWeights {
            columns: self.columns,
            samples,
        }
    }

    /// Collapse latent-cluster columns into populations. `partition[k - 1]`
    /// is the population (1-based) of cluster k; column 0 stays the outlier.
    pub fn merged(&self, partition: &[usize]) -> Result<SoftWeights> {
        if partition.len() + 1 != self.columns {
            return Err(Error::Dimension(format!("partition covers {} clusters, weights have {}", partition.len(), self.columns - 1)));
        }
        let pops = partition.iter().copied().max().unwrap_or(0);
        if partition.contains(&0) {
            return Err(Error::InvalidArgument("population ids are 1-based".into()));
        }
        let cols = pops + 1;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut out = vec![0.0; s.len() / self.columns * cols];
                for (i, row) in s.chunks(self.columns).enumerate() {
                    let dst = &mut out[i * cols..(i + 1) * cols];
                    dst[0] = row[0];
                    for (k, &p) in partition.iter().enumerate() {
                        dst[p] += row[k + 1];
                    }
                }
                out
            })
            .collect();
        SoftWeights::new(cols, samples)
    }

    pub(crate) fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.num_samples() != data.num_samples() {
            return Err(Error::Dimension(format!("weights for {} samples, data has {}", self.num_samples(), data.num_samples())));
        }
        for j in 0..self.num_samples() {
            if self.num_cells(j) != data.sample(j).rows() {
                return Err(Error::Dimension(format!(
                    "sample {j}: weights for {} cells, data has {}",
                    self.num_cells(j),
                    data.sample(j).rows()
                )));
            }
        }
        Ok(())
    }
}

/// Posterior assignment frequencies `w_ijk` from the trace's accumulators.
pub fn soft_cluster_weights(trace: &Trace) -> Result<SoftWeights> {
    if trace.counted_iterations == 0 {
        return Err(Error::InvalidArgument("trace has no counted production iterations".into()));
    }
    let cols = trace.num_clusters + 1;
    if trace.assignment_counts.len() != trace.num_samples()
        || trace.assignment_counts.iter().zip(&trace.sample_sizes).any(|(c, &n)| c.len() != n * cols)
    {
        return Err(Error::InvalidArgument("trace does not carry assignment counts (record_assignments was off)".into()));
    }
    let total = trace.counted_iterations as f64;
    let samples = trace
        .assignment_counts
        .iter()
        .map(|c| c.iter().map(|&v| v as f64 / total).collect())
        .collect();
    SoftWeights::new(cols, samples)
}

/// Box and whisker levels.
pub const QUANTILE_LEVELS: [f64; 4] = [0.01, 0.25, 0.75, 0.99];

/// Weighted quantile: the smallest value whose strictly-smaller mass exceeds
/// `alpha` times the total. `alpha <= 0` gives the minimum and a level no
/// value reaches gives the maximum. Zero-weight entries are ignored.
pub fn weighted_quantile(pairs: &mut [(f64, f64)], alpha: f64) -> Result<f64> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = pairs.iter().position(|p| p.1 > 0.0).ok_or_else(|| Error::InvalidArgument("quantile of an empty population".into()))?;
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if alpha <= 0.0 {
        return Ok(pairs[first].0);
    }
    let target = alpha * total;
    let mut below = 0.0;
    let mut i = 0;
    let mut last = pairs[first].0;
    while i < pairs.len() {
        let y = pairs[i].0;
        let mut group = 0.0;
        while i < pairs.len() && pairs[i].0 == y {
            group += pairs[i].1;
            i += 1;
        }
        if group > 0.0 {
            if target < below {
                return Ok(y);
            }
            last = y;
        }
        below += group;
    }
    Ok(last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuantiles {
    /// Column of the weights (0 is the outlier component).
    pub population: usize,
    pub levels: Vec<f64>,
    /// `values[l][m]`: level `l`, marker `m`.
    pub values: Vec<Vec<f64>>,
}

/// Per-population, per-marker weighted quantiles over all cells, for every
/// non-outlier column of `weights`.
pub fn population_quantiles(weights: &SoftWeights, data: &Dataset, levels: &[f64]) -> Result<Vec<PopulationQuantiles>> {
    weights.check_against(data)?;
    let d = data.dim();
    let mut out = Vec::new();
    for c in 1..weights.num_columns() {
        let mut values = vec![vec![0.0; d]; levels.len()];
        for m in 0..d {
            let mut pairs: Vec<(f64, f64)> = Vec::new();
            for (j, cells) in data.samples().iter().enumerate() {
                for (i, row) in cells.iter_rows().enumerate() {
                    let w = weights.row(j, i)[c];
                    if w > 0.0 {
                        pairs.push((row[m], w));
                    }
                }
            }
            if pairs.is_empty() {
                return Err(Error::InvalidArgument(format!("population {c} carries no weight")));
            }
            for (l, &alpha) in levels.iter().enumerate() {
                values[l][m] = weighted_quantile(&mut pairs, alpha)?;
            }
        }
        out.push(PopulationQuantiles {
            population: c,
            levels: levels.to_vec(),
            values,
        });
    }
    Ok(out)
}
