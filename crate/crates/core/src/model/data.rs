use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major `n × d` matrix of cell measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CellMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(CellMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("rows have differing lengths".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + c]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A collection of grouped samples sharing the same markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<CellMatrix>,
    marker_names: Vec<String>,
    sample_ids: Vec<String>,
    scaled: bool,
}

impl Dataset {
    pub fn new(samples: Vec<CellMatrix>, marker_names: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        let d = marker_names.len();
        if d == 0 {
            return Err(Error::Data("dataset needs at least one marker".into()));
        }
        if samples.is_empty() {
            return Err(Error::Data("dataset needs at least one sample".into()));
        }
        if samples.len() != sample_ids.len() {
            return Err(Error::Data(format!(
                "{} samples but {} sample ids",
                samples.len(),
                sample_ids.len()
            )));
        }
        for (id, s) in sample_ids.iter().zip(&samples) {
            if s.cols() != d {
                return Err(Error::Data(format!(
                    "sample {id} has {} columns, expected {d}",
                    s.cols()
                )));
            }
            if s.rows() == 0 {
                return Err(Error::Data(format!("sample {id} has no cells")));
            }
            if let Some(pos) = s.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "sample {id}: non-finite value at row {}, column {}",
                    pos / d + 1,
                    pos % d + 1
                )));
            }
        }
        Ok(Dataset {
            samples,
            marker_names,
            sample_ids,
            scaled: false,
        })
    }

    /// Dataset with generated marker names `m1..md` and sample ids `s1..sJ`.
    pub fn from_samples(samples: Vec<CellMatrix>) -> Result<Self> {
        let d = samples.first().map_or(0, |s| s.cols());
        let markers = (1..=d).map(|i| format!("m{i}")).collect();
        let ids = (1..=samples.len()).map(|j| format!("s{j}")).collect();
        Self::new(samples, markers, ids)
    }

    pub fn dim(&self) -> usize {
        self.marker_names.len()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, j: usize) -> &CellMatrix {
        &self.samples[j]
    }

    pub fn samples(&self) -> &[CellMatrix] {
        &self.samples
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.rows()).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.samples.iter().map(|s| s.rows()).sum()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub(crate) fn mark_scaled(mut self) -> Self {
        self.scaled = true;
        self
    }

    pub fn pooled_column(&self, c: usize) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.column(c)).collect()
    }

    pub fn pooled_mean(&self) -> DVector<f64> {
        let d = self.dim();
        let mut acc = DVector::zeros(d);
        for s in &self.samples {
            for row in s.iter_rows() {
                for c in 0..d {
                    acc[c] += row[c];
                }
            }
        }
        acc / self.total_cells() as f64
    }

    /// Pooled covariance (divisor `N`).
    pub fn pooled_cov(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mean = self.pooled_mean();
        let mut acc = DMatrix::zeros(d, d);
        for s in &self.samples {
            for row in s.iter_rows() {
                for a in 0..d {
                    for b in 0..d {
                        acc[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
                    }
                }
            }
        }
        acc / self.total_cells() as f64
    }
}
