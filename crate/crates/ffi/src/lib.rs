//! C interface to the `hgmm` library.
//!
//! Every fallible function returns an [`HgmmStatus`]; on failure the message
//! is available from [`hgmm_last_error_message`] on the same thread until
//! the next call. Objects are opaque handles created by `*_new`, `*_load`,
//! `hgmm_fit` or `hgmm_merge` and released with the matching `*_free`.
//! Arrays are row-major doubles.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, size_t};

use hgmm::io::{apply_scaling, fit_scaling, load_samples, vague_preset, PresetSettings};
use hgmm::mcmc::trace_io::{read_trace, write_trace, TraceManifest};
use hgmm::mcmc::{run_chain, McmcConfig, Trace};
use hgmm::merge::{bhattacharyya, dip_test, merge_clusters, soft_cluster_weights, weighted_dip, GaussianSummary, MergeConfig, MergeResult};
use hgmm::model::{CellMatrix, Dataset, PriorSpec};
use hgmm::dist::RngStream;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HgmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numerical = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary; the handle involved should
    /// not be used again.
    Panic = 7,
}

/// Cells of several samples sharing one set of markers.
pub struct HgmmDataset(Dataset);

pub struct HgmmPrior(PriorSpec);

/// Posterior draws with the prior and settings that produced them.
pub struct HgmmTrace {
    trace: Trace,
    prior: PriorSpec,
    config: McmcConfig,
}

pub struct HgmmMerge(MergeResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(hgmm::Error),
}

impl From<hgmm::Error> for Fail {
    fn from(e: hgmm::Error) -> Self {
        Fail::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> HgmmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HgmmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            HgmmStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            HgmmStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            match e.kind() {
                "numerical" | "invalid_state" => HgmmStatus::Numerical,
                "invalid_argument" => HgmmStatus::InvalidArgument,
                "data" => HgmmStatus::Data,
                "io" => HgmmStatus::Io,
                _ => HgmmStatus::Config,
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HgmmStatus::Panic
        }
    }
}

unsafe fn by_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = value;
    Ok(())
}

unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next `hgmm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn hgmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hgmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Build a dataset from `num_samples` row-major blocks stored back to back
/// in `values`; block `j` has `sizes[j]` rows of `dim` values.
///
/// # Safety
/// `sizes` must hold `num_samples` entries and `values` the sum of
/// `sizes[j] * dim` doubles. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dataset_new(
    num_samples: size_t,
    sizes: *const size_t,
    dim: size_t,
    values: *const f64,
    out: *mut *mut HgmmDataset,
) -> HgmmStatus {
    guard(|| {
        let sizes = slice(sizes, num_samples, "sizes")?;
        let total: usize = sizes.iter().sum();
        let values = slice(values, total * dim, "values")?;
        let mut samples = Vec::with_capacity(num_samples);
        let mut at = 0;
        for &n in sizes {
            samples.push(CellMatrix::new(n, dim, values[at..at + n * dim].to_vec())?);
            at += n * dim;
        }
        out_ptr(out, HgmmDataset(Dataset::from_samples(samples)?))
    })
}

/// Load CSV sample files sharing one header.
///
/// # Safety
/// `paths` must hold `count` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dataset_load(paths: *const *const c_char, count: size_t, out: *mut *mut HgmmDataset) -> HgmmStatus {
    guard(|| {
        let ptrs = slice(paths, count, "paths")?;
        let paths = ptrs.iter().map(|&p| path(p, "path")).collect::<Result<Vec<_>, _>>()?;
        out_ptr(out, HgmmDataset(load_samples(&paths)?))
    })
}

/// New dataset with every marker mapped so that its pooled 1% and 99%
/// percentiles become 0 and 1.
///
/// # Safety
/// `data` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dataset_scaled(data: *const HgmmDataset, out: *mut *mut HgmmDataset) -> HgmmStatus {
    guard(|| {
        let d = &by_ref(data, "dataset")?.0;
        let t = fit_scaling(d)?;
        out_ptr(out, HgmmDataset(apply_scaling(d, &t)?))
    })
}

/// # Safety
/// `data` must be a live dataset handle; `num_samples` and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dataset_shape(data: *const HgmmDataset, num_samples: *mut size_t, dim: *mut size_t) -> HgmmStatus {
    guard(|| {
        let d = &by_ref(data, "dataset")?.0;
        write(num_samples, d.num_samples(), "num_samples")?;
        write(dim, d.dim(), "dim")
    })
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dataset_free(data: *mut HgmmDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// `k` vague clusters for data scaled to the unit box.
///
/// # Safety
/// `data` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_prior_vague(data: *const HgmmDataset, k: size_t, out: *mut *mut HgmmPrior) -> HgmmStatus {
    guard(|| {
        let d = &by_ref(data, "dataset")?.0;
        out_ptr(out, HgmmPrior(vague_preset(d, k, &PresetSettings::default())?))
    })
}

/// Prior from its JSON encoding (as written by `hgmm simulate`).
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hgmm_prior_from_json(json: *const c_char, out: *mut *mut HgmmPrior) -> HgmmStatus {
    guard(|| {
        if json.is_null() {
            return Err(Fail::Null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| Fail::Arg("json is not valid UTF-8".into()))?;
        let p: PriorSpec = serde_json::from_str(text).map_err(hgmm::Error::from)?;
        p.validate()?;
        out_ptr(out, HgmmPrior(p))
    })
}

/// # Safety
/// `prior` must be a live prior handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_prior_num_clusters(prior: *const HgmmPrior, out: *mut size_t) -> HgmmStatus {
    guard(|| write(out, by_ref(prior, "prior")?.0.num_clusters(), "out"))
}

/// # Safety
/// `prior` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hgmm_prior_free(prior: *mut HgmmPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Run the sampler. `workers = 0` uses every core; the result does not
/// depend on the worker count.
///
/// # Safety
/// `data` and `prior` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn hgmm_fit(
    data: *const HgmmDataset,
    prior: *const HgmmPrior,
    burn_in: size_t,
    production: size_t,
    thin: size_t,
    seed: u64,
    workers: size_t,
    out: *mut *mut HgmmTrace,
) -> HgmmStatus {
    guard(|| {
        let d = &by_ref(data, "dataset")?.0;
        let p = &by_ref(prior, "prior")?.0;
        let mut config = McmcConfig::new(burn_in, production, thin, seed);
        config.workers = workers;
        config.validate(d.num_samples())?;
        let trace = run_chain(d, p, &config)?;
        out_ptr(
            out,
            HgmmTrace {
                trace,
                prior: p.clone(),
                config,
            },
        )
    })
}

/// Read a trace directory written by `hgmm fit` or [`hgmm_trace_write`].
///
/// # Safety
/// `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hgmm_trace_read(dir: *const c_char, out: *mut *mut HgmmTrace) -> HgmmStatus {
    guard(|| {
        let (trace, manifest) = read_trace(&path(dir, "dir")?)?;
        out_ptr(
            out,
            HgmmTrace {
                trace,
                prior: manifest.prior,
                config: manifest.mcmc,
            },
        )
    })
}

/// # Safety
/// `trace` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hgmm_trace_write(trace: *const HgmmTrace, dir: *const c_char) -> HgmmStatus {
    guard(|| {
        let t = by_ref(trace, "trace")?;
        let manifest = TraceManifest::new(&t.trace, &t.prior, &t.config);
        Ok(write_trace(&path(dir, "dir")?, &t.trace, &manifest)?)
    })
}

/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_trace_num_draws(trace: *const HgmmTrace, out: *mut size_t) -> HgmmStatus {
    guard(|| write(out, by_ref(trace, "trace")?.trace.draws.len(), "out"))
}

/// Posterior probability that cluster `k` (1-based) is present in sample
/// `j` (0-based).
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_trace_activation_probability(trace: *const HgmmTrace, j: size_t, k: size_t, out: *mut f64) -> HgmmStatus {
    guard(|| {
        let t = &by_ref(trace, "trace")?.trace;
        if j >= t.num_samples() || k == 0 || k > t.num_clusters {
            return Err(Fail::Arg(format!(
                "(j, k) = ({j}, {k}) outside {} samples and clusters 1..={}",
                t.num_samples(),
                t.num_clusters
            )));
        }
        write(out, t.activation_probability(j, k - 1), "out")
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hgmm_trace_free(trace: *mut HgmmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Merge the clusters of `trace` with default settings apart from the two
/// distance thresholds and the bootstrap size and seed of the dip test.
///
/// # Safety
/// `trace` and `data` must be live handles; `data` must be the fitted data.
#[no_mangle]
pub unsafe extern "C" fn hgmm_merge(
    trace: *const HgmmTrace,
    data: *const HgmmDataset,
    d1: f64,
    d2: f64,
    dip_bootstrap: size_t,
    dip_seed: u64,
    out: *mut *mut HgmmMerge,
) -> HgmmStatus {
    guard(|| {
        let t = &by_ref(trace, "trace")?.trace;
        let d = &by_ref(data, "dataset")?.0;
        let config = MergeConfig {
            d1,
            d2,
            dip_bootstrap,
            dip_seed,
            ..MergeConfig::default()
        };
        config.validate(d.dim())?;
        let weights = soft_cluster_weights(t)?;
        out_ptr(out, HgmmMerge(merge_clusters(&weights, d, &config)?))
    })
}

/// # Safety
/// `merge` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hgmm_merge_num_populations(merge: *const HgmmMerge, out: *mut size_t) -> HgmmStatus {
    guard(|| write(out, by_ref(merge, "merge")?.0.num_populations(), "out"))
}

/// Copy the 1-based population of each cluster into `partition`, which
/// must have room for exactly `len` = K entries.
///
/// # Safety
/// `merge` must be a live handle and `partition` hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn hgmm_merge_partition(merge: *const HgmmMerge, partition: *mut size_t, len: size_t) -> HgmmStatus {
    guard(|| {
        let p = &by_ref(merge, "merge")?.0.partition;
        if len != p.len() {
            return Err(Fail::Arg(format!("partition has {} entries, buffer holds {len}", p.len())));
        }
        if partition.is_null() {
            return Err(Fail::Null("partition"));
        }
        std::slice::from_raw_parts_mut(partition, len).copy_from_slice(p);
        Ok(())
    })
}

/// # Safety
/// `merge` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hgmm_merge_free(merge: *mut HgmmMerge) {
    if !merge.is_null() {
        drop(Box::from_raw(merge));
    }
}

/// Bhattacharyya distance between two Gaussians in `dim` dimensions.
///
/// # Safety
/// Means hold `dim` doubles, covariances `dim * dim`.
#[no_mangle]
pub unsafe extern "C" fn hgmm_bhattacharyya(
    dim: size_t,
    mean1: *const f64,
    cov1: *const f64,
    mean2: *const f64,
    cov2: *const f64,
    out: *mut f64,
) -> HgmmStatus {
    guard(|| {
        if dim == 0 {
            return Err(Fail::Arg("dim must be positive".into()));
        }
        let g = |m: *const f64, c: *const f64| -> Result<GaussianSummary, Fail> {
            let m = DVector::from_column_slice(slice(m, dim, "mean")?);
            let c = DMatrix::from_row_slice(dim, dim, slice(c, dim * dim, "covariance")?);
            Ok(GaussianSummary::new(m, c, 1.0)?)
        };
        let v = bhattacharyya(&g(mean1, cov1)?, &g(mean2, cov2)?)?;
        write(out, v, "out")
    })
}

/// Dip statistic of `n` values, with optional non-negative weights (null
/// for equal weights).
///
/// # Safety
/// `xs` holds `n` doubles; `ws` is null or holds `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dip(xs: *const f64, ws: *const f64, n: size_t, out: *mut f64) -> HgmmStatus {
    guard(|| {
        let xs = slice(xs, n, "xs")?;
        let ws = if ws.is_null() { None } else { Some(slice(ws, n, "ws")?) };
        write(out, weighted_dip(xs, ws)?, "out")
    })
}

/// Dip test of unimodality against `bootstrap` uniform samples of size `n`.
///
/// # Safety
/// `xs` holds `n` doubles; `dip` and `p_value` are writable.
#[no_mangle]
pub unsafe extern "C" fn hgmm_dip_test(
    xs: *const f64,
    n: size_t,
    bootstrap: size_t,
    seed: u64,
    dip: *mut f64,
    p_value: *mut f64,
) -> HgmmStatus {
    guard(|| {
        let xs = slice(xs, n, "xs")?;
        let t = dip_test(xs, bootstrap, &mut RngStream::new(seed, 0))?;
        write(dip, t.dip, "dip")?;
        write(p_value, t.p_value, "p_value")
    })
}
