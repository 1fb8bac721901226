use hgmm::dist::{draw_mvn, RngStream};
use hgmm::mcmc::{run_chain, McmcConfig, Trace};
use hgmm::merge::soft_cluster_weights;
use hgmm::analysis::population_sizes;
use hgmm::model::{CellMatrix, Dataset, PriorSpec};
use nalgebra::{DMatrix, DVector};

fn fitted() -> Trace {
    let mut rng = RngStream::new(5, 0);
    let centers = [DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, 2.0]), DVector::from_vec(vec![0.0, 2.5])];
    let cov = DMatrix::identity(2, 2) * 0.04;
    let samples = [40usize, 55]
        .iter()
        .map(|&n| {
            let mut vals = Vec::new();
            for i in 0..n {
                vals.extend(draw_mvn(&centers[i % 3], &cov, &mut rng).unwrap().iter());
            }
            CellMatrix::new(n, 2, vals).unwrap()
        })
        .collect();
    let data = Dataset::from_samples(samples).unwrap();
    let prior = PriorSpec::vague(&centers, 1.0, 0.2, 0.1, PriorSpec::default_outlier(&data));
    run_chain(&data, &prior, &McmcConfig::new(20, 40, 2, 11)).unwrap()
}

#[test]
fn identity_partition_gives_mean_weights() {
    let trace = fitted();
    let sizes = population_sizes(&trace, &[1, 2, 3]).unwrap();
    let n = trace.draws.len() as f64;
    for j in 0..2 {
        for k in 0..3 {
            let mean: f64 = trace.draws.iter().map(|d| d.samples[j].pi[k + 1]).sum::<f64>() / n;
            assert!((sizes.sizes[(j, k)] - mean).abs() < 1e-12);
        }
        let total: f64 = sizes.sizes.row(j).sum() + sizes.outlier[j];
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_population_holds_everything_but_the_outlier() {
    let trace = fitted();
    let sizes = population_sizes(&trace, &[1, 1, 1]).unwrap();
    assert_eq!(sizes.sizes.ncols(), 1);
    for j in 0..2 {
        assert!((sizes.sizes[(j, 0)] - (1.0 - sizes.outlier[j])).abs() < 1e-12);
    }
}

#[test]
fn partition_must_cover_every_cluster() {
    let trace = fitted();
    assert!(population_sizes(&trace, &[1, 2]).is_err());
    assert!(population_sizes(&trace, &[0, 1, 2]).is_err());
}

#[test]
fn soft_weights_are_distributions_over_components() {
    let trace = fitted();
    let w = soft_cluster_weights(&trace).unwrap();
    assert_eq!(w.num_columns(), 4);
    for j in 0..2 {
        for i in 0..w.num_cells(j) {
            let row = w.row(j, i);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let all = w.merged(&[1, 1, 1]).unwrap();
    for j in 0..2 {
        for i in 0..w.num_cells(j) {
            let row = all.row(j, i);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}
