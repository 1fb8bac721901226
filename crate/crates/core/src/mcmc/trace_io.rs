//! Trace serialization.
//!
//! A trace directory holds one long-format CSV per parameter family with
//! columns `iteration,k,j,coordinate,value`, the per-cell assignment tallies
//! and a JSON manifest. Components are numbered from 1 with 0 for the
//! outlier; samples are numbered from 0. Matrix entries use the coordinate
//! `a_b`, vector entries `a`, scalars an empty coordinate. Floats are written
//! in shortest round-trip form, so reading a trace back is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LatentState, PriorSpec};

use super::chain::{Diagnostics, PredictiveDraw, SampleDraw, Trace, TraceDraw};
use super::config::{McmcConfig, LATENT_STREAM, PREDICTIVE_STREAM, SAMPLE_STREAM_OFFSET};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ASSIGNMENT_FILE: &str = "assignment_counts.csv";

const FAMILIES: [&str; 10] = [
    "theta",
    "sigma_theta",
    "psi",
    "nu",
    "mu",
    "sigma",
    "pi",
    "active",
    "log_posterior",
    "predictive",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub latent: u64,
    pub predictive: u64,
    pub sample_offset: u64,
}

impl Default for StreamLayout {
    fn default() -> Self {
        StreamLayout {
            latent: LATENT_STREAM,
            predictive: PREDICTIVE_STREAM,
            sample_offset: SAMPLE_STREAM_OFFSET,
        }
    }
}

/// Everything needed to interpret and re-run a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub version: String,
    /// SHA-256 of the JSON encoding of `(mcmc, prior, run_config)`.
    pub config_hash: String,
    pub mcmc: McmcConfig,
    pub prior: PriorSpec,
    pub streams: StreamLayout,
    pub dim: usize,
    pub num_clusters: usize,
    pub sample_sizes: Vec<usize>,
    pub iterations: Vec<usize>,
    pub counted_iterations: usize,
    pub nu_acceptance_rates: Vec<f64>,
    pub diagnostics: Diagnostics,
    /// Command line that produced the trace, when run from the CLI.
    #[serde(default)]
    pub command: Vec<String>,
    /// The full run configuration, when run from the CLI.
    #[serde(default)]
    pub run_config: Option<serde_json::Value>,
}

impl TraceManifest {
    pub fn new(trace: &Trace, prior: &PriorSpec, config: &McmcConfig) -> Self {
        let mut m = TraceManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: String::new(),
            mcmc: config.clone(),
            prior: prior.clone(),
            streams: StreamLayout::default(),
            dim: trace.dim,
            num_clusters: trace.num_clusters,
            sample_sizes: trace.sample_sizes.clone(),
            iterations: trace.draws.iter().map(|d| d.iteration).collect(),
            counted_iterations: trace.counted_iterations,
            nu_acceptance_rates: trace.diagnostics.nu_acceptance_rates(),
            diagnostics: trace.diagnostics.clone(),
            command: Vec::new(),
            run_config: None,
        };
        m.rehash();
        m
    }

    pub fn with_run_config(mut self, command: Vec<String>, run_config: serde_json::Value) -> Self {
        self.command = command;
        self.run_config = Some(run_config);
        self.rehash();
        self
    }

    fn rehash(&mut self) {
        let payload = serde_json::to_vec(&(&self.mcmc, &self.prior, &self.run_config)).unwrap_or_default();
        self.config_hash = hex(&Sha256::digest(&payload));
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

struct Family {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl Family {
    fn create(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.csv"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "iteration,k,j,coordinate,value").map_err(|e| io_err(&path, e))?;
        Ok(Family { out, path })
    }

    fn row(&mut self, it: usize, k: Option<usize>, j: Option<usize>, coord: &str, value: f64) -> Result<()> {
        let k = k.map(|v| v.to_string()).unwrap_or_default();
        let j = j.map(|v| v.to_string()).unwrap_or_default();
        writeln!(self.out, "{it},{k},{j},{coord},{value:e}").map_err(|e| io_err(&self.path, e))
    }

    fn vector(&mut self, it: usize, k: Option<usize>, j: Option<usize>, v: &DVector<f64>) -> Result<()> {
        for (a, x) in v.iter().enumerate() {
            self.row(it, k, j, &a.to_string(), *x)?;
        }
        Ok(())
    }

    fn matrix(&mut self, it: usize, k: Option<usize>, j: Option<usize>, m: &DMatrix<f64>) -> Result<()> {
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                self.row(it, k, j, &format!("{a}_{b}"), m[(a, b)])?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Write `trace` and its manifest into `dir`, creating the directory.
pub fn write_trace(dir: &Path, trace: &Trace, manifest: &TraceManifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut f: Vec<Family> = FAMILIES.iter().map(|n| Family::create(dir, n)).collect::<Result<_>>()?;
    for d in &trace.draws {
        let it = d.iteration;
        for (c, l) in d.latent.iter().enumerate() {
            let k = Some(c + 1);
            f[0].vector(it, k, None, &l.theta)?;
            f[1].matrix(it, k, None, &l.sigma_theta)?;
            f[2].matrix(it, k, None, &l.psi)?;
            f[3].row(it, k, None, "", l.nu as f64)?;
        }
        for (j, s) in d.samples.iter().enumerate() {
            for c in 0..s.mu.len() {
                f[4].vector(it, Some(c + 1), Some(j), &s.mu[c])?;
                f[5].matrix(it, Some(c + 1), Some(j), &s.sigma[c])?;
                f[7].row(it, Some(c + 1), Some(j), "", if s.active[c] { 1.0 } else { 0.0 })?;
            }
            for (c, p) in s.pi.iter().enumerate() {
                f[6].row(it, Some(c), Some(j), "", *p)?;
            }
        }
        f[8].row(it, None, None, "", d.log_posterior)?;
        for p in &d.predictive {
            f[9].vector(it, None, p.sample, &p.cell)?;
        }
    }
    for fam in f {
        fam.finish()?;
    }

    let path = dir.join(ASSIGNMENT_FILE);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "j,cell,k,count").map_err(|e| io_err(&path, e))?;
    let width = trace.num_clusters + 1;
    for (j, counts) in trace.assignment_counts.iter().enumerate() {
        for (idx, &c) in counts.iter().enumerate() {
            if c > 0 {
                writeln!(out, "{j},{},{},{c}", idx / width, idx % width).map_err(|e| io_err(&path, e))?;
            }
        }
    }
    out.flush().map_err(|e| io_err(&path, e))?;

    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| io_err(&path, e))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<TraceManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

struct Row {
    it: usize,
    k: Option<usize>,
    j: Option<usize>,
    a: Option<usize>,
    b: Option<usize>,
    value: f64,
}

fn read_family(dir: &Path, name: &str) -> Result<Vec<Row>> {
    let path = dir.join(format!("{name}.csv"));
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| io_err(&path, e))?;
    let bad = |line: usize, what: &str| Error::Data(format!("{}: line {line}: bad {what}", path.display()));
    let opt = |s: &str| -> std::result::Result<Option<usize>, ()> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| ())
        }
    };
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| io_err(&path, e))?;
        if rec.len() != 5 {
            return Err(bad(line, "field count"));
        }
        let it = rec[0].parse().map_err(|_| bad(line, "iteration"))?;
        let k = opt(&rec[1]).map_err(|_| bad(line, "k"))?;
        let j = opt(&rec[2]).map_err(|_| bad(line, "j"))?;
        let (a, b) = match rec[3].split_once('_') {
            Some((a, b)) => (
                Some(a.parse().map_err(|_| bad(line, "coordinate"))?),
                Some(b.parse().map_err(|_| bad(line, "coordinate"))?),
            ),
            None => (opt(&rec[3]).map_err(|_| bad(line, "coordinate"))?, None),
        };
        let value = rec[4].parse().map_err(|_| bad(line, "value"))?;
        rows.push(Row { it, k, j, a, b, value });
    }
    Ok(rows)
}

/// Read a trace written by [`write_trace`].
pub fn read_trace(dir: &Path) -> Result<(Trace, TraceManifest)> {
    let m = read_manifest(dir)?;
    let (d, kk, nj) = (m.dim, m.num_clusters, m.sample_sizes.len());
    let index: std::collections::HashMap<usize, usize> = m.iterations.iter().enumerate().map(|(i, &it)| (it, i)).collect();
    let blank_latent = LatentState {
        theta: DVector::zeros(d),
        sigma_theta: DMatrix::zeros(d, d),
        psi: DMatrix::zeros(d, d),
        nu: 0,
    };
    let blank_sample = SampleDraw {
        mu: vec![DVector::zeros(d); kk],
        sigma: vec![DMatrix::zeros(d, d); kk],
        pi: vec![0.0; kk + 1],
        active: vec![false; kk],
    };
    let mut draws: Vec<TraceDraw> = m
        .iterations
        .iter()
        .map(|&it| TraceDraw {
            iteration: it,
            latent: vec![blank_latent.clone(); kk],
            samples: vec![blank_sample.clone(); nj],
            log_posterior: f64::NAN,
            predictive: Vec::new(),
        })
        .collect();

    let malformed = |name: &str| Error::Data(format!("{}: entry out of range in {name}.csv", dir.display()));
    for name in FAMILIES {
        for r in read_family(dir, name)? {
            let draw = index.get(&r.it).map(|&i| &mut draws[i]).ok_or_else(|| malformed(name))?;
            let comp = |k: Option<usize>| k.filter(|&k| k >= 1 && k <= kk).map(|k| k - 1);
            let sample = r.j.filter(|&j| j < nj);
            let coord = r.a.filter(|&a| a < d);
            let pair = coord.zip(r.b.filter(|&b| b < d));
            let ok = match name {
                "theta" => comp(r.k).zip(coord).map(|(c, a)| draw.latent[c].theta[a] = r.value),
                "sigma_theta" => comp(r.k).zip(pair).map(|(c, ab)| draw.latent[c].sigma_theta[ab] = r.value),
                "psi" => comp(r.k).zip(pair).map(|(c, ab)| draw.latent[c].psi[ab] = r.value),
                "nu" => comp(r.k).map(|c| draw.latent[c].nu = r.value as u32),
                "mu" => comp(r.k)
                    .zip(sample)
                    .zip(coord)
                    .map(|((c, j), a)| draw.samples[j].mu[c][a] = r.value),
                "sigma" => comp(r.k)
                    .zip(sample)
                    .zip(pair)
                    .map(|((c, j), ab)| draw.samples[j].sigma[c][ab] = r.value),
                "pi" => r
                    .k
                    .filter(|&k| k <= kk)
                    .zip(sample)
                    .map(|(k, j)| draw.samples[j].pi[k] = r.value),
                "active" => comp(r.k).zip(sample).map(|(c, j)| draw.samples[j].active[c] = r.value != 0.0),
                "log_posterior" => Some(draw.log_posterior = r.value),
                _ => coord.map(|a| {
                    let same = draw.predictive.last().is_some_and(|p: &PredictiveDraw| p.sample == sample && a > 0);
                    if !same {
                        draw.predictive.push(PredictiveDraw {
                            sample,
                            cell: DVector::zeros(d),
                        });
                    }
                    draw.predictive.last_mut().unwrap().cell[a] = r.value;
                }),
            };
            ok.ok_or_else(|| malformed(name))?;
        }
    }

    let path = dir.join(ASSIGNMENT_FILE);
    let mut assignment_counts: Vec<Vec<u32>> = if m.mcmc.record_assignments {
        m.sample_sizes.iter().map(|&n| vec![0; n * (kk + 1)]).collect()
    } else {
        Vec::new()
    };
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| io_err(&path, e))?;
    for rec in rdr.deserialize::<(usize, usize, usize, u32)>() {
        let (j, i, k, c) = rec.map_err(|e| io_err(&path, e))?;
        if j >= assignment_counts.len() || i >= m.sample_sizes[j] || k > kk {
            return Err(malformed("assignment_counts"));
        }
        assignment_counts[j][i * (kk + 1) + k] = c;
    }

    let trace = Trace {
        dim: d,
        num_clusters: kk,
        sample_sizes: m.sample_sizes.clone(),
        draws,
        assignment_counts,
        counted_iterations: m.counted_iterations,
        diagnostics: m.diagnostics.clone(),
    };
    Ok((trace, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::run_chain;
    use crate::model::density_tests::toy_prior_1d;
    use crate::model::{CellMatrix, Dataset};

    #[test]
    fn trace_round_trips_exactly() {
        let prior = toy_prior_1d();
        let data = Dataset::from_samples(vec![
            CellMatrix::new(5, 1, vec![0.1, 0.3, 2.9, 3.3, 8.0]).unwrap(),
            CellMatrix::new(4, 1, vec![-0.2, 0.05, 3.1, 1e-300]).unwrap(),
        ])
        .unwrap();
        let mut config = McmcConfig::new(2, 9, 2, 5);
        config.predictive.samples = vec![1];
        config.predictive.pooled = true;
        let trace = run_chain(&data, &prior, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = TraceManifest::new(&trace, &prior, &config);
        write_trace(dir.path(), &trace, &manifest).unwrap();
        let (back, m) = read_trace(dir.path()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(m, manifest);
        assert_eq!(m.config_hash.len(), 64);
    }

    #[test]
    fn hash_tracks_configuration() {
        let prior = toy_prior_1d();
        let data = Dataset::from_samples(vec![CellMatrix::new(3, 1, vec![0.0, 1.0, 3.0]).unwrap()]).unwrap();
        let mut config = McmcConfig::new(0, 1, 1, 5);
        config.record_assignments = false;
        let trace = run_chain(&data, &prior, &config).unwrap();
        let a = TraceManifest::new(&trace, &prior, &config);
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &trace, &a).unwrap();
        assert_eq!(read_trace(dir.path()).unwrap().0, trace);
        let mut other = config.clone();
        other.seed = 6;
        let b = TraceManifest::new(&trace, &prior, &other);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash, TraceManifest::new(&trace, &prior, &config).config_hash);
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_trace(dir.path()).is_err());
    }
}
