//! C ABI over `mcf-core`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`McfStatus`]; on failure [`mcf_last_error`] describes the problem. No
//! panic crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mcf_core::arm::{Contrast, N_ARMS};
use mcf_core::data::{EstimationSample, FeatureKind, FeatureMetadata, FeatureRole};
use mcf_core::dgp::{self, DgpConfig};
use mcf_core::forest::ForestParams;
use mcf_core::ndarray::Array2;
use mcf_core::pipeline::{self, PipelineConfig, PipelineResult};
use mcf_core::report;
use mcf_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// An estimation sample: outcome, treatment arm and covariates.
pub struct McfSample {
    inner: EstimationSample,
}

/// A fitted forest with its effect estimates.
pub struct McfResult {
    inner: PipelineResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McfOptions {
    pub n_trees: usize,
    pub seed: u64,
    pub subsample_fraction: f64,
    pub min_leaf_per_arm: usize,
    /// 0 selects ceil(sqrt(p)).
    pub mtry: usize,
    /// Inverse arm-share weights when aggregating.
    pub share_weights: bool,
    /// Minimum estimated arm probability; 0 or less skips the check.
    pub support_threshold: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> McfStatus {
    match e {
        Error::InvalidArgument(_) => McfStatus::InvalidArgument,
        Error::Io { .. } => McfStatus::Io,
        Error::Numerical(_) | Error::Support(_) | Error::Tree { .. } => McfStatus::Numerical,
        _ => McfStatus::Data,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (McfStatus, String)>) -> McfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            McfStatus::Panic
        }
    }
}

fn core(e: Error) -> (McfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (McfStatus, String) {
    (McfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (McfStatus, String) {
    (McfStatus::InvalidArgument, msg.into())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn mcf_options_default() -> McfOptions {
    let f = ForestParams::default();
    let p = PipelineConfig::default();
    McfOptions {
        n_trees: f.n_trees,
        seed: f.seed,
        subsample_fraction: f.subsample_fraction,
        min_leaf_per_arm: f.min_leaf_per_arm,
        mtry: 0,
        share_weights: p.aggregation.share_weights,
        support_threshold: p.support_threshold.unwrap_or(0.0),
    }
}

impl McfOptions {
    fn to_config(self) -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.forest.n_trees = self.n_trees;
        c.forest.seed = self.seed;
        c.forest.subsample_fraction = self.subsample_fraction;
        c.forest.min_leaf_per_arm = self.min_leaf_per_arm;
        c.forest.mtry = (self.mtry > 0).then_some(self.mtry);
        c.aggregation.share_weights = self.share_weights;
        c.support_threshold = (self.support_threshold > 0.0).then_some(self.support_threshold);
        c
    }
}

/// Build a sample from row-major covariates `x` (`n` × `p`), outcomes `y`
/// and arm codes `d` (0..=3). `unordered` (nullable) flags categorical
/// columns; `z` (nullable, `n_z` entries) lists heterogeneity columns.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mcf_sample_from_arrays(
    y: *const f64,
    d: *const u8,
    x: *const f64,
    n: usize,
    p: usize,
    unordered: *const bool,
    z: *const usize,
    n_z: usize,
    out: *mut *mut McfSample,
) -> McfStatus {
    guard(|| {
        if y.is_null() || d.is_null() || x.is_null() {
            return Err(null("input array"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 || p == 0 {
            return Err(invalid("sample needs at least one row and one column"));
        }
        let len = n.checked_mul(p).ok_or_else(|| invalid("n * p overflows"))?;
        let y = std::slice::from_raw_parts(y, n).to_vec();
        let d = std::slice::from_raw_parts(d, n).to_vec();
        let x = Array2::from_shape_vec((n, p), std::slice::from_raw_parts(x, len).to_vec())
            .map_err(|e| invalid(e.to_string()))?;
        let mut meta = FeatureMetadata::default();
        for j in 0..p {
            let kind = if !unordered.is_null() && *unordered.add(j) {
                FeatureKind::Unordered
            } else {
                FeatureKind::Ordered
            };
            meta.push(format!("x{j}"), kind, FeatureRole::Shared);
        }
        let z = if z.is_null() {
            Vec::new()
        } else {
            std::slice::from_raw_parts(z, n_z).to_vec()
        };
        let inner = EstimationSample::new(y, d, x, meta, z).map_err(core)?;
        *out = Box::into_raw(Box::new(McfSample { inner }));
        Ok(())
    })
}

/// Draw a synthetic sample. `preset` is one of "validation",
/// "income_slope", "flat", "placebo"; `n` = 0 keeps the preset size.
///
/// # Safety
/// `preset` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcf_sample_simulate(
    preset: *const c_char,
    seed: u64,
    n: usize,
    out: *mut *mut McfSample,
) -> McfStatus {
    guard(|| {
        if preset.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let name = CStr::from_ptr(preset).to_str().map_err(|_| invalid("preset is not UTF-8"))?;
        let mut cfg = match name {
            "validation" => DgpConfig::validation(seed),
            "income_slope" => DgpConfig::income_slope(seed),
            "flat" => DgpConfig::flat(seed),
            "placebo" => DgpConfig::placebo(seed),
            other => return Err(invalid(format!("unknown preset {other:?}"))),
        };
        if n > 0 {
            cfg.n = n;
        }
        let (inner, _) = dgp::generate(&cfg).map_err(core)?;
        *out = Box::into_raw(Box::new(McfSample { inner }));
        Ok(())
    })
}

/// Number of rows, 0 for a null handle.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcf_sample_len(sample: *const McfSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `sample` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mcf_sample_free(sample: *mut McfSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Common support check, honest forest and effect estimation.
///
/// # Safety
/// `sample` must be a live handle; `options` null or valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_estimate(
    sample: *const McfSample,
    options: *const McfOptions,
    out: *mut *mut McfResult,
) -> McfStatus {
    guard(|| {
        let sample = sample.as_ref().ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| mcf_options_default());
        let inner = pipeline::run(&sample.inner, &opts.to_config()).map_err(core)?;
        *out = Box::into_raw(Box::new(McfResult { inner }));
        Ok(())
    })
}

/// Average effect of arm `treated` against arm `control`.
///
/// # Safety
/// `result` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_effect(
    result: *const McfResult,
    treated: usize,
    control: usize,
    estimate: *mut f64,
    se: *mut f64,
    p_value: *mut f64,
) -> McfStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let e = r.inner.ate.effect(treated, control).map_err(core)?;
        write(estimate, e.estimate);
        write(se, e.se);
        write(p_value, e.p_value);
        Ok(())
    })
}

/// Potential outcome level of `arm`.
///
/// # Safety
/// `result` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_potential_outcome(
    result: *const McfResult,
    arm: usize,
    estimate: *mut f64,
    se: *mut f64,
) -> McfStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let e = r
            .inner
            .ate
            .potential
            .get(arm)
            .ok_or_else(|| invalid(format!("arm {arm} outside 0..{}", N_ARMS - 1)))?;
        write(estimate, e.estimate);
        write(se, e.se);
        Ok(())
    })
}

unsafe fn write(p: *mut f64, v: f64) {
    if !p.is_null() {
        *p = v;
    }
}

/// Rows kept after the support check (the length of IATE vectors).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_len(result: *const McfResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.sample.len())
}

/// Original row index of every kept row into `out` (`len` entries).
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_kept_rows(result: *const McfResult, out: *mut usize, len: usize) -> McfStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != r.inner.kept.len() {
            return Err(invalid(format!("buffer holds {len}, need {}", r.inner.kept.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r.inner.kept);
        Ok(())
    })
}

/// Individual effects of `treated` vs `control` per kept row; NaN where a
/// row has no support.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_iates(
    result: *const McfResult,
    treated: usize,
    control: usize,
    out: *mut f64,
    len: usize,
) -> McfStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = Contrast::new(treated, control).map_err(core)?;
        let col = r.inner.effects.iates.column(c).map_err(core)?;
        if len != col.len() {
            return Err(invalid(format!("buffer holds {len}, need {}", col.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&col);
        Ok(())
    })
}

/// Effect table as JSON; free with [`mcf_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_to_json(result: *const McfResult, out: *mut *mut c_char) -> McfStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = serde_json::to_string(&r.inner.ate).map_err(|e| (McfStatus::Data, e.to_string()))?;
        *out = CString::new(s).map_err(|e| (McfStatus::Data, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mcf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `result` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mcf_result_free(result: *mut McfResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// `100 * effect / baseline`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcf_relative_effect(effect: f64, baseline: f64, out: *mut f64) -> McfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = report::relative_effect(effect, baseline).map_err(core)?;
        Ok(())
    })
}
