//! Seeded random variate generation.
//!
//! Every variate the sampler needs is drawn from an [`RngStream`], a ChaCha8
//! generator keyed by a `(seed, stream_id)` pair. Each sample owns one stream
//! and the latent layer owns another, so results do not depend on how work is
//! scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize};

/// Independent, reproducible random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the half-open interval `(0, 1]`, safe to take logs of.
    pub fn open_uniform(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn std_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `ln X` for `X ~ Gamma(shape, 1)`.
///
/// Marsaglia–Tsang squeeze/rejection for `shape >= 1`; for `shape < 1` the
/// boost `X = Y U^{1/shape}` with `Y ~ Gamma(shape + 1)`, carried out in log
/// space so tiny shapes do not underflow.
pub fn draw_log_gamma(shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gamma shape must be positive and finite, got {shape}"
        )));
    }
    if shape < 1.0 {
        let boosted = draw_log_gamma(shape + 1.0, rng)?;
        return Ok(boosted + rng.open_uniform().ln() / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.std_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.open_uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return Ok(d.ln() + v.ln());
        }
    }
}

pub fn draw_gamma(shape: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(draw_log_gamma(shape, rng)?.exp())
}

pub fn draw_chi_squared(dof: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(2.0 * draw_gamma(0.5 * dof, rng)?)
}

pub fn draw_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    let la = draw_log_gamma(a, rng)?;
    let lb = draw_log_gamma(b, rng)?;
    // a / (a + b) evaluated stably in log space
    let m = la.max(lb);
    Ok((la - m).exp() / ((la - m).exp() + (lb - m).exp()))
}

/// `μ + L z` with `L` the lower Cholesky factor of `Σ`.
pub fn draw_mvn(mu: &DVector<f64>, sigma: &DMatrix<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
    if sigma.nrows() != mu.len() {
        return Err(Error::Dimension(format!(
            "mean has length {} but covariance is {}x{}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let chol = cholesky(sigma, "mvn covariance")?;
    Ok(draw_mvn_factor(mu, &chol.l(), rng))
}

/// Normal draw given an explicit lower factor.
pub fn draw_mvn_factor(mu: &DVector<f64>, lower: &DMatrix<f64>, rng: &mut RngStream) -> DVector<f64> {
    let z = DVector::from_fn(mu.len(), |_, _| rng.std_normal());
    mu + lower * z
}

/// Lower-triangular Bartlett factor `A` with `A Aᵀ ~ W(I, dof)`.
fn bartlett_factor(d: usize, dof: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        a[(i, i)] = draw_chi_squared(dof - i as f64, rng)?.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.std_normal();
        }
    }
    Ok(a)
}

fn check_wishart_dof(d: usize, dof: f64, what: &str) -> Result<()> {
    if !(dof > d as f64 - 1.0) || !dof.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what} degrees of freedom {dof} must exceed d - 1 = {}",
            d as f64 - 1.0
        )));
    }
    Ok(())
}

/// Wishart `W(V, n)` with mean `n V` (Bartlett construction).
pub fn draw_wishart(scale: &DMatrix<f64>, dof: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    check_wishart_dof(d, dof, "Wishart")?;
    let chol = cholesky(scale, "Wishart scale")?;
    let m = chol.l() * bartlett_factor(d, dof, rng)?;
    Ok(symmetrize(&(&m * m.transpose())))
}

/// Wishart `W(P^{-1}, n)` parameterized by the inverse scale `P`.
///
/// Uses `L_P^{-T} A` as the square root of the scale, so `P` is never inverted.
pub fn draw_wishart_inv_scale(inv_scale: &DMatrix<f64>, dof: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let d = inv_scale.nrows();
    check_wishart_dof(d, dof, "Wishart")?;
    let chol = cholesky(inv_scale, "Wishart inverse scale")?;
    let a = bartlett_factor(d, dof, rng)?;
    let m = chol
        .l()
        .transpose()
        .solve_upper_triangular(&a)
        .ok_or_else(|| Error::Numerical("singular Wishart factor".into()))?;
    Ok(symmetrize(&(&m * m.transpose())))
}

/// Inverse Wishart `IW(Ψ, ν)` with mean `Ψ / (ν - d - 1)`.
///
/// Distributed as the inverse of `W(Ψ^{-1}, ν)`: with `Ψ = L Lᵀ` and Bartlett
/// factor `A`, the draw is `M Mᵀ` for `M = L A^{-T}`.
pub fn draw_inverse_wishart(psi: &DMatrix<f64>, dof: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let d = psi.nrows();
    check_wishart_dof(d, dof, "inverse Wishart")?;
    let chol = cholesky(psi, "inverse Wishart scale")?;
    let a = bartlett_factor(d, dof, rng)?;
    let mt = a
        .solve_lower_triangular(&chol.l().transpose())
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    Ok(symmetrize(&(mt.transpose() * &mt)))
}

/// Dirichlet via normalized gamma variates (normalized in log space).
pub fn draw_dirichlet(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("empty Dirichlet parameter".into()));
    }
    let logs = alpha
        .iter()
        .map(|&a| draw_log_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Categorical draw from unnormalized log weights using the Gumbel-max trick.
pub fn draw_categorical(log_weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidArgument("categorical log weights contain NaN or +inf".into()));
    }
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &lw) in log_weights.iter().enumerate() {
        let g = -(-rng.open_uniform().ln()).ln();
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let score = lw + g;
        if best.is_none() || score > best_score {
            best = Some(i);
            best_score = score;
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("all categorical log weights are -inf".into()))
}

/// Inverse-CDF categorical draw used in the assignment sweep.
///
/// `log_weights` is overwritten with the normalized cumulative weights. One
/// uniform per draw keeps the per-cell cost low.
pub(crate) fn draw_categorical_inplace(log_weights: &mut [f64], u: f64) -> usize {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        total += (*w - m).exp();
        *w = total;
    }
    let target = u * total;
    log_weights
        .iter()
        .position(|&c| target < c)
        .unwrap_or(log_weights.len() - 1)
}
