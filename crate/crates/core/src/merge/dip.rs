//! Hartigan's dip statistic for weighted one-dimensional data, and a
//! bootstrap test of unimodality against the uniform distribution.
//!
//! Points are sorted and tied values are merged into one atom carrying the
//! summed weight. With total weight normalized to one, let `a_i` be the
//! empirical CDF just after atom `i` and `b_i` the value just before it. The
//! dip is the smallest `ε` for which a continuous unimodal CDF `G` satisfies
//! `a_i − ε ≤ G(x_i) ≤ b_i + ε` at every atom. For unit weights and distinct
//! values this is the classical statistic (`1/(2n)` at its smallest).

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dist::RngStream;
use crate::error::{Error, Result};

/// Smallest sample size accepted by [`dip_test`].
pub const MIN_DIP_POINTS: usize = 4;

/// Sorted distinct support with normalized weights and ECDF levels.
#[derive(Clone, Debug)]
struct Atoms {
    x: Vec<f64>,
    w: Vec<f64>,
    /// ECDF right after each atom.
    a: Vec<f64>,
    /// ECDF right before each atom.
    b: Vec<f64>,
}

impl Atoms {
    fn new(xs: &[f64], ws: Option<&[f64]>) -> Result<Self> {
        if let Some(ws) = ws {
            if ws.len() != xs.len() {
                return Err(Error::Dimension(format!("{} values but {} weights", xs.len(), ws.len())));
            }
            if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidArgument("dip weights must be finite and nonnegative".into()));
            }
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("dip input contains a non-finite value".into()));
        }
        let weight = |i: usize| ws.map_or(1.0, |w| w[i]);
        let mut order: Vec<usize> = (0..xs.len()).filter(|&i| weight(i) > 0.0).collect();
        order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut x: Vec<f64> = Vec::with_capacity(order.len());
        let mut w: Vec<f64> = Vec::with_capacity(order.len());
        for i in order {
            match x.last() {
                Some(&last) if last == xs[i] => *w.last_mut().unwrap() += weight(i),
                _ => {
                    x.push(xs[i]);
                    w.push(weight(i));
                }
            }
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("dip input has zero total weight".into()));
        }
        for v in w.iter_mut() {
            *v /= total;
        }
        let mut a = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for &v in &w {
            acc += v;
            a.push(acc);
        }
        let b = a.iter().zip(&w).map(|(a, w)| a - w).collect();
        Ok(Atoms { x, w, a, b })
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn max_weight(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max)
    }
}

/// Height at `x_j` of the chord through `(x_jb, y_jb)` and `(x_je, y_je)`.
///
/// Both the fast algorithm and the oracle evaluate deviations through this
/// one expression so that their results agree bit for bit.
#[inline]
fn chord(x: &[f64], y: &[f64], jb: usize, je: usize, j: usize) -> f64 {
    y[jb] + (x[j] - x[jb]) * ((y[je] - y[jb]) / (x[je] - x[jb]))
}

/// Points within this distance of a chord count as lying on it. ECDF levels
/// are in `[0, 1]`, so this is a few ulps.
const ON_CHORD: f64 = 64.0 * f64::EPSILON;

/// `a_j` above the chord through b-points: the atom weight when `b_j` lies
/// on the chord, so that collinear points give the same value whichever
/// chord they are measured against.
#[inline]
fn above_chord(x: &[f64], a: &[f64], b: &[f64], w: &[f64], jb: usize, je: usize, j: usize) -> f64 {
    let c = chord(x, b, jb, je, j);
    if (b[j] - c).abs() <= ON_CHORD {
        w[j]
    } else {
        a[j] - c
    }
}

/// Chord through a-points above `b_j`; see [`above_chord`].
#[inline]
fn below_chord(x: &[f64], a: &[f64], b: &[f64], w: &[f64], jb: usize, je: usize, j: usize) -> f64 {
    let c = chord(x, a, jb, je, j);
    if (a[j] - c).abs() <= ON_CHORD {
        w[j]
    } else {
        c - b[j]
    }
}

/// Dip of unit-weight data. Fewer than two distinct values give 0.
pub fn dip_statistic(xs: &[f64]) -> Result<f64> {
    weighted_dip(xs, None)
}

/// Dip of weighted data; zero-weight points are ignored.
pub fn weighted_dip(xs: &[f64], ws: Option<&[f64]>) -> Result<f64> {
    let atoms = Atoms::new(xs, ws)?;
    Ok(dip_of(&atoms))
}

fn dip_of(at: &Atoms) -> f64 {
    let m = at.len();
    if m < 2 {
        return 0.0;
    }
    let (x, w, a, b) = (&at.x[..], &at.w[..], &at.a[..], &at.b[..]);

    // mn[j]: predecessor of j on the convex minorant of the b-points 0..=j.
    let mut mn = vec![0usize; m];
    for j in 1..m {
        mn[j] = j - 1;
        while mn[j] != 0 {
            let k = mn[j];
            let kk = mn[k];
            if (b[k] - b[kk]) * (x[j] - x[k]) < (b[j] - b[k]) * (x[k] - x[kk]) {
                break;
            }
            mn[j] = kk;
        }
    }
    // mj[j]: successor of j on the concave majorant of the a-points j..m.
    let mut mj = vec![m - 1; m];
    for j in (0..m - 1).rev() {
        mj[j] = j + 1;
        while mj[j] != m - 1 {
            let k = mj[j];
            let kk = mj[k];
            if (a[k] - a[j]) * (x[kk] - x[k]) > (a[kk] - a[k]) * (x[k] - x[j]) {
                break;
            }
            mj[j] = kk;
        }
    }

    // twice the dip, floored by the largest atom
    let mut dip2 = at.max_weight();
    let (mut low, mut high) = (0usize, m - 1);
    let mut gcm = Vec::new();
    let mut lcm = Vec::new();
    while low < high {
        gcm.clear();
        gcm.push(high);
        while *gcm.last().unwrap() > low {
            let next = mn[*gcm.last().unwrap()];
            gcm.push(next);
        }
        gcm.reverse();
        debug_assert_eq!(gcm[0], low);
        lcm.clear();
        lcm.push(low);
        while *lcm.last().unwrap() < high {
            let next = mj[*lcm.last().unwrap()];
            lcm.push(next);
        }

        // largest gap between majorant and minorant, at the vertices of either
        let mut d = -1.0;
        let mut best = (low, high);
        let mut t = 0;
        for &gv in &gcm {
            while lcm[t + 1] < gv {
                t += 1;
            }
            let dx = if lcm.binary_search(&gv).is_ok() { w[gv] } else { below_chord(x, a, b, w, lcm[t], lcm[t + 1], gv) };
            if dx >= d {
                d = dx;
                best = (gv, if gv != lcm[t + 1] { lcm[t + 1] } else { gv });
            }
        }
        let mut t = 0;
        for &lv in &lcm {
            while gcm[t + 1] < lv {
                t += 1;
            }
            let dx = if gcm.binary_search(&lv).is_ok() { w[lv] } else { above_chord(x, a, b, w, gcm[t], gcm[t + 1], lv) };
            if dx >= d {
                d = dx;
                best = (if lv != gcm[t] { gcm[t] } else { lv }, lv);
            }
        }
        if d < dip2 {
            break;
        }
        let (new_low, new_high) = best;

        // deviations on the flanks outside the new modal interval
        for s in gcm.windows(2) {
            let (jb, je) = (s[0], s[1]);
            if je > new_low {
                break;
            }
            for j in jb..=je {
                let dev = if j == jb || j == je { w[j] } else { above_chord(x, a, b, w, jb, je, j) };
                dip2 = dip2.max(dev);
            }
        }
        for s in lcm.windows(2) {
            let (jb, je) = (s[0], s[1]);
            if jb < new_high {
                continue;
            }
            for j in jb..=je {
                let dev = if j == jb || j == je { w[j] } else { below_chord(x, a, b, w, jb, je, j) };
                dip2 = dip2.max(dev);
            }
        }
        if new_low == low && new_high == high {
            dip2 = dip2.max(d);
            break;
        }
        low = new_low;
        high = new_high;
    }
    dip2 / 2.0
}

/// Reference dip by exhaustive search over the position of the mode.
///
/// For each split atom `p` the best unimodal fit is convex on the left and
/// concave on the right. Its error is the larger of the two one-sided hull
/// deviations, unless the two sides cannot agree on a common value at `x_p`,
/// in which case `ε` is raised until they can. The dip is the
/// minimum over `p`. Cost is cubic in the number of atoms, intended for
/// testing only.
pub fn dip_oracle(xs: &[f64], ws: Option<&[f64]>) -> Result<f64> {
    let at = Atoms::new(xs, ws)?;
    let m = at.len();
    if m < 2 {
        return Ok(0.0);
    }
    let (x, w, a, b) = (&at.x[..], &at.w[..], &at.a[..], &at.b[..]);
    let mut best = f64::INFINITY;
    let mut hull: Vec<usize> = Vec::with_capacity(m);
    for p in 0..m {
        hull.clear();
        for j in 0..=p {
            while hull.len() >= 2 {
                let (h1, h2) = (hull[hull.len() - 1], hull[hull.len() - 2]);
                if (b[h1] - b[h2]) * (x[j] - x[h1]) >= (b[j] - b[h1]) * (x[h1] - x[h2]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(j);
        }
        let mut cv = w[..=p].iter().copied().fold(0.0, f64::max);
        for s in hull.windows(2) {
            for j in s[0] + 1..s[1] {
                cv = cv.max(above_chord(x, a, b, w, s[0], s[1], j));
            }
        }
        hull.clear();
        for j in p..m {
            while hull.len() >= 2 {
                let (h1, h2) = (hull[hull.len() - 1], hull[hull.len() - 2]);
                if (a[h1] - a[h2]) * (x[j] - x[h1]) <= (a[j] - a[h1]) * (x[h1] - x[h2]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(j);
        }
        let mut cc = w[p..].iter().copied().fold(0.0, f64::max);
        for s in hull.windows(2) {
            for j in s[0] + 1..s[1] {
                cc = cc.max(below_chord(x, a, b, w, s[0], s[1], j));
            }
        }
        let eps = cv.max(cc) / 2.0;
        if eps >= best {
            continue;
        }
        best = best.min(meeting_eps(x, a, b, p, eps));
    }
    Ok(best)
}

/// Smallest `ε ≥ eps` at which a left convex piece and a right concave piece
/// within `ε` of the ECDF can meet at `x_p`.
///
/// Each constraint bounds `G(x_p)` by a line in `ε`: lower bounds `c − kε`
/// from the left, upper bounds `d + lε` from the right. Their envelopes are
/// convex decreasing and concave increasing, so Newton steps on the binding
/// pair reach the crossing exactly after finitely many steps.
fn meeting_eps(x: &[f64], a: &[f64], b: &[f64], p: usize, eps: f64) -> f64 {
    let mut lower = vec![(a[p], 1.0)];
    for j in 0..p {
        lower.push((a[j], 1.0));
        for i in 0..j {
            let r = (x[p] - x[j]) / (x[j] - x[i]);
            lower.push((a[j] * (1.0 + r) - b[i] * r, 1.0 + 2.0 * r));
        }
    }
    let mut upper = vec![(b[p], 1.0)];
    for k in p + 1..x.len() {
        upper.push((b[k], 1.0));
        for l in k + 1..x.len() {
            let s = (x[k] - x[p]) / (x[l] - x[k]);
            upper.push((b[k] * (1.0 + s) - a[l] * s, 1.0 + 2.0 * s));
        }
    }
    let binding = |e: f64| {
        let lo = lower.iter().copied().max_by(|u, v| (u.0 - u.1 * e).total_cmp(&(v.0 - v.1 * e))).unwrap();
        let up = upper.iter().copied().min_by(|u, v| (u.0 + u.1 * e).total_cmp(&(v.0 + v.1 * e))).unwrap();
        (lo, up)
    };
    let mut eps = eps;
    loop {
        let ((c, k), (d, l)) = binding(eps);
        if c - k * eps <= d + l * eps {
            return eps;
        }
        let next = (c - d) / (k + l);
        if next <= eps {
            return eps;
        }
        eps = next;
    }
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_size(ws: &[f64]) -> f64 {
    let s: f64 = ws.iter().sum();
    let s2: f64 = ws.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipTest {
    pub dip: f64,
    pub p_value: f64,
    /// Size of the uniform reference samples.
    pub reference_size: usize,
}

/// Bootstrap null distributions of the dip, keyed by sample size.
///
/// Reference samples are uniform on (0, 1). Sizes above `max_size` are
/// compared on the `√n · dip` scale against the null at `max_size`.
#[derive(Debug)]
pub struct DipNull {
    bootstrap: usize,
    max_size: usize,
    seed: u64,
    cache: Mutex<HashMap<usize, std::sync::Arc<Vec<f64>>>>,
}

impl DipNull {
    pub fn new(bootstrap: usize, max_size: usize, seed: u64) -> Self {
        DipNull {
            bootstrap,
            max_size: max_size.max(MIN_DIP_POINTS),
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Sorted null dips for reference size `n`. Each size draws from its own
    /// stream, so results do not depend on the order sizes are requested in.
    fn null(&self, n: usize) -> Result<std::sync::Arc<Vec<f64>>> {
        if let Some(v) = self.cache.lock().unwrap().get(&n) {
            return Ok(v.clone());
        }
        let mut rng = RngStream::new(self.seed, n as u64);
        let mut buf = vec![0.0; n];
        let mut dips = Vec::with_capacity(self.bootstrap);
        for _ in 0..self.bootstrap {
            for v in buf.iter_mut() {
                *v = rng.uniform();
            }
            dips.push(dip_statistic(&buf)?);
        }
        dips.sort_by(f64::total_cmp);
        let dips = std::sync::Arc::new(dips);
        self.cache.lock().unwrap().insert(n, dips.clone());
        Ok(dips)
    }

    /// Test weighted data; the reference size is the rounded effective size.
    pub fn test(&self, xs: &[f64], ws: Option<&[f64]>) -> Result<DipTest> {
        if self.bootstrap == 0 {
            return Err(Error::InvalidArgument("dip bootstrap needs at least one replicate".into()));
        }
        let n_eff = match ws {
            Some(ws) => effective_size(ws),
            None => xs.len() as f64,
        };
        let n = n_eff.round() as usize;
        if n < MIN_DIP_POINTS {
            return Err(Error::InvalidArgument(format!(
                "dip test needs at least {MIN_DIP_POINTS} points, effective size is {n_eff:.2}"
            )));
        }
        let dip = weighted_dip(xs, ws)?;
        let (size, threshold) = if n > self.max_size {
            (self.max_size, dip * (n as f64 / self.max_size as f64).sqrt())
        } else {
            (n, dip)
        };
        let null = self.null(size)?;
        let below = null.partition_point(|&d| d < threshold);
        Ok(DipTest {
            dip,
            p_value: (null.len() - below) as f64 / null.len() as f64,
            reference_size: size,
        })
    }
}

/// Bootstrap dip test of unit-weight data against `bootstrap` uniform
/// samples of the same size.
pub fn dip_test(xs: &[f64], bootstrap: usize, rng: &mut RngStream) -> Result<DipTest> {
    if xs.len() < MIN_DIP_POINTS {
        return Err(Error::InvalidArgument(format!("dip test needs at least {MIN_DIP_POINTS} points, got {}", xs.len())));
    }
    if bootstrap == 0 {
        return Err(Error::InvalidArgument("dip bootstrap needs at least one replicate".into()));
    }
    let dip = dip_statistic(xs)?;
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut exceed = 0usize;
    for _ in 0..bootstrap {
        for v in buf.iter_mut() {
            *v = rng.uniform();
        }
        if dip_statistic(&buf)? >= dip {
            exceed += 1;
        }
    }
    Ok(DipTest {
        dip,
        p_value: exceed as f64 / bootstrap as f64,
        reference_size: n,
    })
}
