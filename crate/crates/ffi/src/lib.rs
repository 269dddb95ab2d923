//! C ABI over `pathmed`.
//!
//! Every function returns a [`PmStatus`]. On failure the message is kept per
//! thread and read with [`pm_last_error`]. Datasets are opaque handles owned
//! by the caller and released with [`pm_dataset_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::Array2;
use pathmed::config::EffectEntry;
use pathmed::{
    decompose_ate, estimate, estimate_effect, Category, EffectEstimate, Error, EstimationSettings, LearnerKind,
    LearnerPolicy, MediatorBlock, Method, ObservedData, Regime,
};

/// Status codes. Nonzero codes from 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    Io = 5,
    Panic = 6,
}

impl From<&Error> for PmStatus {
    fn from(e: &Error) -> Self {
        match e.category() {
            Category::Config => PmStatus::Config,
            Category::Data => PmStatus::Data,
            Category::Numeric => PmStatus::Numeric,
            Category::Io => PmStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> PmStatus
where
    F: FnOnce() -> Result<(), (PmStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PmStatus::Panic
        }
    }
}

fn lift(e: Error) -> (PmStatus, String) {
    (PmStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (PmStatus, String) {
    (PmStatus::NullPointer, format!("{what} is null"))
}

/// Opaque dataset handle.
pub struct PmDataset {
    data: ObservedData,
}

/// Estimation options. Obtain defaults from [`pm_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PmOptions {
    /// Method name (`eif2`, `eif1`, `tmle`, `ri`, ...); null means `eif2`.
    pub method: *const c_char,
    /// Learner for every nuisance (`glm`, `glm2`, `boost`, `stack`, `saturated`); null means `glm`.
    pub learner: *const c_char,
    /// Cross-fitting folds; 0 or 1 disables cross-fitting.
    pub folds: u32,
    pub seed: u64,
    pub clip: f64,
}

/// One effect estimate. `se`, `ci_low` and `ci_high` are NaN when the method
/// has no influence function.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PmEffect {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub theta_comparison: f64,
    pub theta_baseline: f64,
}

impl From<&EffectEstimate> for PmEffect {
    fn from(e: &EffectEstimate) -> Self {
        PmEffect {
            point: e.point,
            se: e.se.unwrap_or(f64::NAN),
            ci_low: e.ci.map_or(f64::NAN, |c| c.0),
            ci_high: e.ci.map_or(f64::NAN, |c| c.1),
            theta_comparison: e.theta_comparison,
            theta_baseline: e.theta_baseline,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pm_options_default() -> PmOptions {
    PmOptions { method: ptr::null(), learner: ptr::null(), folds: 1, seed: 20240521, clip: 0.01 }
}

/// Builds a dataset from row-major arrays.
///
/// `x` is `n × p` (may be null when `p == 0`), `a` and `y` have length `n`,
/// `m` is `n × k` with one univariate mediator per column in causal order
/// (may be null when `k == 0`). `discrete` is null or `k` flags.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn pm_dataset_new(
    n: usize,
    p: usize,
    k: usize,
    x: *const f64,
    a: *const f64,
    m: *const f64,
    discrete: *const u8,
    y: *const f64,
    out: *mut *mut PmDataset,
) -> PmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if a.is_null() || y.is_null() {
            return Err(null("a or y"));
        }
        if (p > 0 && x.is_null()) || (k > 0 && m.is_null()) {
            return Err(null("x or m"));
        }
        let xs = if p > 0 { std::slice::from_raw_parts(x, n * p).to_vec() } else { vec![] };
        let x = Array2::from_shape_vec((n, p), xs).map_err(|e| (PmStatus::Data, e.to_string()))?;
        let a = std::slice::from_raw_parts(a, n).to_vec();
        let y = std::slice::from_raw_parts(y, n).to_vec();
        let ms = if k > 0 { std::slice::from_raw_parts(m, n * k) } else { &[] };
        let blocks = (0..k)
            .map(|j| {
                let col: Vec<f64> = (0..n).map(|i| ms[i * k + j]).collect();
                let name = format!("m{}", j + 1);
                if !discrete.is_null() && *discrete.add(j) != 0 {
                    MediatorBlock::discrete(name, col)
                } else {
                    MediatorBlock::continuous(name, col)
                }
            })
            .collect();
        let data = ObservedData::new(x, a, blocks, y).map_err(lift)?;
        *out = Box::into_raw(Box::new(PmDataset { data }));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from [`pm_dataset_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pm_dataset_free(ds: *mut PmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of units, or 0 for null.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_dataset_n(ds: *const PmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.n())
}

/// Number of mediator blocks, or 0 for null.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_dataset_k(ds: *const PmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.k())
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, (PmStatus, String)> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| (PmStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn resolve(opts: *const PmOptions) -> Result<(Method, EstimationSettings), (PmStatus, String)> {
    let o = if opts.is_null() { pm_options_default() } else { *opts };
    let method: Method = opt_str(o.method, "method")?.unwrap_or("eif2").parse().map_err(lift)?;
    let learner: LearnerKind = opt_str(o.learner, "learner")?.unwrap_or("glm").parse().map_err(lift)?;
    let mut s = EstimationSettings { policy: LearnerPolicy::uniform(learner), folds: o.folds.max(1) as usize, ..Default::default() };
    s.fit.seed = o.seed;
    s.estimator.seed = o.seed;
    s.estimator.clip = o.clip;
    Ok((method, s))
}

/// Estimates `θ` for the regime `regime[0..len]` (entries 0 or 1, `len = K + 1`).
/// `se` receives NaN when the method has no influence function; it may be null.
///
/// # Safety
/// `ds` must be a live handle; `regime` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_estimate_theta(
    ds: *const PmDataset,
    regime: *const u8,
    len: usize,
    opts: *const PmOptions,
    theta: *mut f64,
    se: *mut f64,
) -> PmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if regime.is_null() || theta.is_null() {
            return Err(null("regime or theta"));
        }
        let r = Regime::new(std::slice::from_raw_parts(regime, len).to_vec()).map_err(lift)?;
        let (method, settings) = resolve(opts)?;
        let est = estimate(&ds.data, &r, &method, &settings).map_err(lift)?;
        *theta = est.theta;
        if !se.is_null() {
            *se = est.variance().map_or(f64::NAN, f64::sqrt);
        }
        Ok(())
    })
}

/// Estimates a named effect (`NDE`, `cPSE_M2`, ...) or a regime pair `011-001`.
///
/// # Safety
/// `ds` must be a live handle, `effect` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_estimate_effect(
    ds: *const PmDataset,
    effect: *const c_char,
    opts: *const PmOptions,
    out: *mut PmEffect,
) -> PmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let name = opt_str(effect, "effect")?.ok_or_else(|| null("effect"))?;
        let entry: EffectEntry = name.parse().map_err(lift)?;
        let spec = entry.resolve(ds.data.k()).map_err(lift)?;
        let (method, settings) = resolve(opts)?;
        let e = estimate_effect(&ds.data, &spec, &method, &settings).map_err(lift)?;
        *out = PmEffect::from(&e);
        Ok(())
    })
}

/// Decomposes the ATE into `K + 1` components in the default order (direct
/// path first). `components` must have room for `capacity` entries; the
/// number written is stored in `written`.
///
/// # Safety
/// `ds` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_decompose(
    ds: *const PmDataset,
    opts: *const PmOptions,
    components: *mut PmEffect,
    capacity: usize,
    written: *mut usize,
    ate: *mut PmEffect,
) -> PmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if components.is_null() || written.is_null() || ate.is_null() {
            return Err(null("output"));
        }
        let need = ds.data.k() + 1;
        if capacity < need {
            return Err((PmStatus::Config, format!("components needs room for {need} entries, got {capacity}")));
        }
        let (method, settings) = resolve(opts)?;
        let d = decompose_ate(&ds.data, &method, None, &settings).map_err(lift)?;
        for (i, c) in d.components.iter().enumerate() {
            *components.add(i) = PmEffect::from(c);
        }
        *written = d.components.len();
        *ate = PmEffect::from(&d.ate);
        Ok(())
    })
}
