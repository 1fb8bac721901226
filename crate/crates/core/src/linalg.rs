//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Every solve and determinant goes through a Cholesky factor. The only place
//! an inverse of an SPD matrix is formed is [`spd_inverse`], which builds it
//! from triangular solves against the factor; it is used where a sum of
//! precision matrices is intrinsic to a conditional (the Wishart update of the
//! latent covariance scale).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

const SYMMETRY_TOL: f64 = 1e-8;

/// Cholesky factorization with a non-SPD error naming `context`.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{context}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::not_spd(format!("{context}: non-finite entry")));
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::not_spd(format!("{context}: matrix is not symmetric")));
            }
        }
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::not_spd(context.to_string()))
}

/// Cholesky with escalating diagonal jitter `1e-10 * trace * 10^t`.
///
/// Returns the factor and the number of jitter rounds that were needed
/// (zero when the matrix factored as given).
pub fn cholesky_jittered(m: &DMatrix<f64>, context: &str) -> Result<(Chol, u32)> {
    match cholesky(m, context) {
        Ok(c) => Ok((c, 0)),
        Err(Error::NotSpd(_)) if m.iter().all(|v| v.is_finite()) => {
            let sym = symmetrize(m);
            let d = m.nrows();
            let base = (sym.trace().abs() / d as f64).max(f64::MIN_POSITIVE) * 1e-10;
            let mut eps = base;
            for round in 1..=8 {
                let jittered = &sym + DMatrix::identity(d, d) * eps;
                if let Some(c) = Cholesky::new(jittered) {
                    return Ok((c, round));
                }
                eps *= 10.0;
            }
            Err(Error::not_spd(format!("{context}: jitter did not restore positive definiteness")))
        }
        Err(e) => Err(e),
    }
}

pub fn is_spd(m: &DMatrix<f64>) -> bool {
    cholesky(m, "spd check").is_ok()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn log_det(chol: &Chol) -> f64 {
    chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0
}

/// `L^{-1} v` for the lower factor `L`.
pub fn forward_solve(chol: &Chol, v: &DVector<f64>) -> DVector<f64> {
    chol.l()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal")
}

/// `v^T A^{-1} v` using the factor of `A`.
pub fn inv_quad_form(chol: &Chol, v: &DVector<f64>) -> f64 {
    forward_solve(chol, v).norm_squared()
}

/// `tr(A^{-1} B)` using the factor of `A`.
pub fn trace_inv_product(chol: &Chol, b: &DMatrix<f64>) -> f64 {
    chol.solve(b).trace()
}

/// Inverse of an SPD matrix assembled from its Cholesky factor.
pub fn spd_inverse(chol: &Chol) -> DMatrix<f64> {
    let n = chol.l_dirty().nrows();
    symmetrize(&chol.solve(&DMatrix::identity(n, n)))
}

/// Multivariate log-gamma `ln Γ_d(a)`.
pub fn ln_multigamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    let mut acc = 0.25 * df * (df - 1.0) * std::f64::consts::PI.ln();
    for i in 0..d {
        acc += ln_gamma(a - 0.5 * i as f64);
    }
    acc
}

/// Posterior of a normal mean with prior `N(prior_mean, prior_cov)` given an
/// observation summary `obs_mean` with covariance `obs_cov` (the covariance of
/// the data mean, e.g. `Σ/n`).
///
/// Uses `C = prior_cov + obs_cov` only through its Cholesky factor:
/// `mean = m0 + A C^{-1} (x̄ - m0)` and `cov = B - B C^{-1} B` where `B` is
/// the smaller of the two covariances (better conditioned subtraction).
pub fn normal_posterior(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    obs_mean: &DVector<f64>,
    obs_cov: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let total = prior_cov + obs_cov;
    let chol = cholesky(&symmetrize(&total), "normal posterior")?;
    let resid = obs_mean - prior_mean;
    let mean = prior_mean + prior_cov * chol.solve(&resid);
    let small = if obs_cov.trace() <= prior_cov.trace() {
        obs_cov
    } else {
        prior_cov
    };
    let cov = small - small * chol.solve(small);
    Ok((mean, symmetrize(&cov)))
}

/// Lower triangle of `m` in row-major order (including the diagonal).
pub fn lower_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = m[(i, j)];
        }
    }
    out
}
