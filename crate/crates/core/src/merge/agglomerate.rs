//! Greedy agglomeration of latent clusters into super-clusters.
//!
//! At each step the closest pair of current super-clusters (by the
//! Bhattacharyya distance of their soft-weighted Gaussian approximations) is
//! considered. Below `d1` the pair merges outright. Between `d1` and `d2` it
//! merges only if no projection of its pooled cells is multimodal by the dip
//! test; otherwise the pair is set aside for the rest of the run. The run
//! stops when the closest remaining pair is at least `d2` apart.

use std::collections::{HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

use super::dip::DipNull;
use super::gaussian::{bhattacharyya, fisher_coordinate, gaussian_approx, FisherCovariance, GaussianSummary};
use super::weights::SoftWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    /// Pairs closer than this always merge.
    pub d1: f64,
    /// Pairs at least this far apart never merge.
    pub d2: f64,
    pub dip_alpha: f64,
    pub dip_bootstrap: usize,
    /// Reference samples larger than this are compared on the `√n · dip` scale.
    pub dip_max_size: usize,
    pub dip_seed: u64,
    /// Coordinate axes to test; `None` tests every axis.
    pub axes: Option<Vec<usize>>,
    pub fisher: bool,
    pub fisher_covariance: FisherCovariance,
    /// Test the cells' most probable component with unit weights instead
    /// of soft weights.
    pub hard_assignments: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            d1: 0.2,
            d2: 1.0,
            dip_alpha: 0.05,
            dip_bootstrap: 1000,
            dip_max_size: 5000,
            dip_seed: 0,
            axes: None,
            fisher: true,
            fisher_covariance: FisherCovariance::Average,
            hard_assignments: false,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.d1 > 0.0 && self.d1 <= self.d2) {
            return Err(Error::Config(format!("merge thresholds need 0 < d1 <= d2, got d1 = {}, d2 = {}", self.d1, self.d2)));
        }
        if !(self.dip_alpha > 0.0 && self.dip_alpha < 1.0) {
            return Err(Error::Config(format!("dip_alpha must lie in (0, 1), got {}", self.dip_alpha)));
        }
        if self.dip_bootstrap == 0 {
            return Err(Error::Config("dip_bootstrap must be positive".into()));
        }
        if let Some(axes) = &self.axes {
            if let Some(a) = axes.iter().find(|&&a| a >= dim) {
                return Err(Error::Config(format!("projection axis {a} out of range for dimension {dim}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeCriterion {
    /// Below the soft threshold.
    Distance,
    /// Between the thresholds, every projection unimodal.
    Unimodal,
    /// Between the thresholds, some projection multimodal; not merged.
    Multimodal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTest {
    /// `axis:<m>` or `fisher`.
    pub projection: String,
    pub dip: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    /// Member clusters (1-based) of the two super-clusters.
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: f64,
    pub criterion: MergeCriterion,
    pub tests: Vec<ProjectionTest>,
}

impl MergeStep {
    pub fn merged(&self) -> bool {
        self.criterion != MergeCriterion::Multimodal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    /// `partition[k - 1]` is the 1-based population of cluster k.
    pub partition: Vec<usize>,
    pub merge_log: Vec<MergeStep>,
    /// Gaussian approximation per population, `None` when it had no weight.
    pub populations: Vec<Option<GaussianSummary>>,
    /// Per-cell population weights (column 0 is the outlier component).
    #[serde(skip)]
    pub soft_weights: Option<SoftWeights>,
}

impl MergeResult {
    pub fn num_populations(&self) -> usize {
        self.partition.iter().copied().max().unwrap_or(0)
    }

    /// Member clusters (1-based) of each population.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        groups_of(&self.partition)
    }
}

fn groups_of(partition: &[usize]) -> Vec<Vec<usize>> {
    let m = partition.iter().copied().max().unwrap_or(0);
    let mut groups = vec![Vec::new(); m];
    for (k, &p) in partition.iter().enumerate() {
        groups[p - 1].push(k + 1);
    }
    groups
}

/// Canonical partition: populations numbered by their smallest member.
fn canonical(groups: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut sorted: Vec<&Vec<usize>> = groups.iter().collect();
    sorted.sort_by_key(|g| g[0]);
    let mut partition = vec![0; k];
    for (p, g) in sorted.iter().enumerate() {
        for &c in g.iter() {
            partition[c - 1] = p + 1;
        }
    }
    partition
}

/// Rebuild the partition of `k` clusters from a merge log.
pub fn replay(k: usize, log: &[MergeStep]) -> Result<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (1..=k).map(|c| vec![c]).collect();
    for (n, step) in log.iter().enumerate().filter(|(_, s)| s.merged()) {
        let find = |members: &Vec<usize>, groups: &Vec<Vec<usize>>| groups.iter().position(|g| g == members);
        let (Some(a), Some(b)) = (find(&step.left, &groups), find(&step.right, &groups)) else {
            return Err(Error::InvalidArgument(format!("merge step {n} does not name two current super-clusters")));
        };
        if a == b {
            return Err(Error::InvalidArgument(format!("merge step {n} merges a super-cluster with itself")));
        }
        let mut union = groups[a].clone();
        union.extend(&groups[b]);
        union.sort_unstable();
        groups[a] = union;
        groups.remove(b);
    }
    Ok(canonical(&groups, k))
}

/// The greedy loop with the cluster summaries and the dip decision supplied
/// by the caller. `summary` returns `None` for a super-cluster that cannot
/// be summarized; such groups never merge.
pub fn agglomerate<S, T>(k: usize, d1: f64, d2: f64, mut summary: S, mut tests: T) -> Result<(Vec<usize>, Vec<MergeStep>)>
where
    S: FnMut(&[usize]) -> Result<Option<GaussianSummary>>,
    T: FnMut(&[usize], &[usize], &GaussianSummary, &GaussianSummary) -> Result<(bool, Vec<ProjectionTest>)>,
{
    let mut groups: Vec<Vec<usize>> = (1..=k).map(|c| vec![c]).collect();
    let mut summaries: HashMap<Vec<usize>, Option<GaussianSummary>> = HashMap::new();
    let mut distances: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    let mut excluded: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
    let mut log = Vec::new();
    loop {
        for g in &groups {
            if !summaries.contains_key(g) {
                let s = summary(g)?;
                if s.is_none() {
                    warn!("clusters {g:?} carry no usable weight and are left unmerged");
                }
                summaries.insert(g.clone(), s);
            }
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let key = (groups[a].clone(), groups[b].clone());
                if excluded.contains(&key) {
                    continue;
                }
                let (Some(sa), Some(sb)) = (&summaries[&groups[a]], &summaries[&groups[b]]) else {
                    continue;
                };
                let dist = match distances.get(&key) {
                    Some(&d) => d,
                    None => {
                        let d = bhattacharyya(sa, sb)?;
                        distances.insert(key, d);
                        d
                    }
                };
                if best.is_none_or(|(_, _, bd)| dist < bd) {
                    best = Some((a, b, dist));
                }
            }
        }
        let Some((a, b, dist)) = best else { break };
        if dist >= d2 {
            break;
        }
        let (left, right) = (groups[a].clone(), groups[b].clone());
        let (criterion, results) = if dist < d1 {
            (MergeCriterion::Distance, Vec::new())
        } else {
            let sa = summaries[&left].as_ref().unwrap();
            let sb = summaries[&right].as_ref().unwrap();
            let (unimodal, results) = tests(&left, &right, sa, sb)?;
            (if unimodal { MergeCriterion::Unimodal } else { MergeCriterion::Multimodal }, results)
        };
        log.push(MergeStep {
            left: left.clone(),
            right: right.clone(),
            distance: dist,
            criterion,
            tests: results,
        });
        if criterion == MergeCriterion::Multimodal {
            excluded.insert((left, right));
            continue;
        }
        let mut union = left;
        union.extend(&right);
        union.sort_unstable();
        groups[a] = union;
        groups.remove(b);
    }
    Ok((canonical(&groups, k), log))
}

/// Pooled cells of two super-clusters with their combined weights, and the
/// projections to test.
fn projection_tests(
    left: &[usize],
    right: &[usize],
    sl: &GaussianSummary,
    sr: &GaussianSummary,
    weights: &SoftWeights,
    data: &Dataset,
    config: &MergeConfig,
    null: &DipNull,
) -> Result<(bool, Vec<ProjectionTest>)> {
    let members: Vec<usize> = left.iter().chain(right).copied().collect();
    let mut cells: Vec<&[f64]> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (j, sample) in data.samples().iter().enumerate() {
        for (i, row) in sample.iter_rows().enumerate() {
            let w = weights.mass(j, i, &members);
            if w > 0.0 {
                cells.push(row);
                ws.push(w);
            }
        }
    }
    let mut projections: Vec<(String, Vec<f64>)> = Vec::new();
    let axes: Vec<usize> = config.axes.clone().unwrap_or_else(|| (0..data.dim()).collect());
    for a in axes {
        projections.push((format!("axis:{a}"), cells.iter().map(|c| c[a]).collect()));
    }
    if config.fisher {
        match fisher_coordinate(sl, sr, config.fisher_covariance) {
            Ok(dir) => projections.push((
                "fisher".into(),
                cells.iter().map(|c| c.iter().zip(dir.iter()).map(|(x, v)| x * v).sum()).collect(),
            )),
            Err(e) => warn!("skipping Fisher projection for {left:?} + {right:?}: {e}"),
        }
    }
    let mut results = Vec::new();
    let mut unimodal = true;
    for (name, xs) in projections {
        let t = null.test(&xs, Some(&ws))?;
        if t.p_value < config.dip_alpha {
            unimodal = false;
        }
        results.push(ProjectionTest {
            projection: name,
            dip: t.dip,
            p_value: t.p_value,
        });
    }
    Ok((unimodal, results))
}

/// Merge the latent clusters behind `weights` (columns 1..=K) into
/// populations.
pub fn merge_clusters(weights: &SoftWeights, data: &Dataset, config: &MergeConfig) -> Result<MergeResult> {
    config.validate(data.dim())?;
    weights.check_against(data)?;
    let k = weights.num_columns() - 1;
    if k == 0 {
        return Err(Error::InvalidArgument("no latent clusters to merge".into()));
    }
    let test_weights = if config.hard_assignments { weights.hardened() } else { weights.clone() };
    let null = DipNull::new(config.dip_bootstrap, config.dip_max_size, config.dip_seed);
    let summary = |g: &[usize]| match gaussian_approx(g, weights, data) {
        Ok(s) => Ok(Some(s)),
        Err(Error::InvalidArgument(_)) | Err(Error::NotSpd(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let tests = |l: &[usize], r: &[usize], sl: &GaussianSummary, sr: &GaussianSummary| {
        projection_tests(l, r, sl, sr, &test_weights, data, config, &null)
    };
    let (partition, merge_log) = agglomerate(k, config.d1, config.d2, summary, tests)?;
    let populations = groups_of(&partition)
        .iter()
        .map(|g| summary(g))
        .collect::<Result<Vec<_>>>()?;
    let soft_weights = Some(weights.merged(&partition)?);
    Ok(MergeResult {
        partition,
        merge_log,
        populations,
        soft_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{draw_mvn, RngStream};
    use crate::model::CellMatrix;
    use nalgebra::{DMatrix, DVector};

    fn gs(mu: f64, var: f64) -> GaussianSummary {
        GaussianSummary::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, var), 1.0).unwrap()
    }

    /// Summaries of unions by moment pooling of equal-weight 1-D members.
    fn pooled(base: &[(f64, f64)], g: &[usize]) -> GaussianSummary {
        let n = g.len() as f64;
        let mean = g.iter().map(|&c| base[c - 1].0).sum::<f64>() / n;
        let var = g.iter().map(|&c| base[c - 1].1 + (base[c - 1].0 - mean).powi(2)).sum::<f64>() / n;
        gs(mean, var)
    }

    #[test]
    fn identical_clusters_merge_by_distance() {
        let (p, log) = agglomerate(2, 0.2, 1.0, |_| Ok(Some(gs(0.0, 1.0))), |_, _, _, _| unreachable!()).unwrap();
        assert_eq!(p, vec![1, 1]);
        assert_eq!(log[0].criterion, MergeCriterion::Distance);
        assert_eq!(log[0].distance, 0.0);
    }

    #[test]
    fn multimodal_pairs_are_set_aside() {
        let base = [(0.0, 1.0), (1.5, 1.0), (20.0, 1.0)];
        let (p, log) = agglomerate(3, 0.2, 1.0, |g| Ok(Some(pooled(&base, g))), |_, _, _, _| Ok((false, vec![]))).unwrap();
        assert_eq!(p, vec![1, 2, 3]);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].criterion, MergeCriterion::Multimodal);
        assert_eq!(replay(3, &log).unwrap(), p);
    }

    #[test]
    fn replay_reproduces_partition_and_rejects_bad_logs() {
        let base = [(0.0, 1.0), (0.3, 1.0), (1.6, 1.0), (9.0, 1.0), (9.2, 1.1)];
        let (p, log) = agglomerate(5, 0.2, 1.0, |g| Ok(Some(pooled(&base, g))), |_, _, _, _| Ok((true, vec![]))).unwrap();
        assert_eq!(replay(5, &log).unwrap(), p);
        assert_eq!(p, vec![1, 1, 1, 2, 2]);
        let mut bad = log.clone();
        bad.swap(0, log.len() - 1);
        bad[0].left = vec![1, 2];
        assert!(replay(5, &bad).is_err());
    }

    #[test]
    fn unsummarizable_groups_stay_alone() {
        let (p, log) = agglomerate(
            3,
            0.2,
            1.0,
            |g| Ok(if g.contains(&2) { None } else { Some(gs(0.0, 1.0)) }),
            |_, _, _, _| unreachable!(),
        )
        .unwrap();
        assert_eq!(p, vec![1, 2, 1]);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn config_validation() {
        let mut c = MergeConfig::default();
        assert!(c.validate(3).is_ok());
        c.d1 = 2.0;
        assert!(c.validate(3).is_err());
        c = MergeConfig { dip_alpha: 1.0, ..MergeConfig::default() };
        assert!(c.validate(3).is_err());
        c = MergeConfig { axes: Some(vec![3]), ..MergeConfig::default() };
        assert!(c.validate(3).is_err());
    }

    fn two_cluster_data(sep: f64, seed: u64) -> (Dataset, SoftWeights) {
        let mut rng = RngStream::new(seed, 0);
        let cov = DMatrix::identity(2, 2) * 0.25;
        let mut rows = Vec::new();
        let mut w = Vec::new();
        for i in 0..600 {
            let c = i % 2;
            let m = DVector::from_vec(vec![c as f64 * sep, 0.0]);
            rows.push(draw_mvn(&m, &cov, &mut rng).unwrap().as_slice().to_vec());
            let mut row = vec![0.0; 3];
            row[c + 1] = 1.0;
            w.extend(row);
        }
        let data = Dataset::from_samples(vec![CellMatrix::from_rows(&rows).unwrap()]).unwrap();
        (data, SoftWeights::new(3, vec![w]).unwrap())
    }

    #[test]
    fn dip_decides_between_thresholds() {
        let config = MergeConfig {
            d1: 0.01,
            d2: 100.0,
            dip_bootstrap: 200,
            ..MergeConfig::default()
        };
        // well separated halves: bimodal along the first axis
        let (data, w) = two_cluster_data(4.0, 1);
        let r = merge_clusters(&w, &data, &config).unwrap();
        assert_eq!(r.partition, vec![1, 2]);
        assert_eq!(r.merge_log[0].criterion, MergeCriterion::Multimodal);
        assert_eq!(r.merge_log[0].tests.len(), 3);
        // a split of one blob
        let (data, w) = two_cluster_data(0.4, 2);
        let r = merge_clusters(&w, &data, &config).unwrap();
        assert_eq!(r.partition, vec![1, 1]);
        assert_eq!(r.merge_log[0].criterion, MergeCriterion::Unimodal);
        let sw = r.soft_weights.as_ref().unwrap();
        assert_eq!(sw.num_columns(), 2);
        assert!(r.populations[0].is_some());
    }

    #[test]
    fn deterministic() {
        let config = MergeConfig {
            d1: 0.01,
            d2: 100.0,
            dip_bootstrap: 100,
            ..MergeConfig::default()
        };
        let (data, w) = two_cluster_data(1.2, 3);
        let a = merge_clusters(&w, &data, &config).unwrap();
        let b = merge_clusters(&w, &data, &config).unwrap();
        assert_eq!(a, b);
    }
}
