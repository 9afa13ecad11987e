//! C ABI over `gmf-core`.
//!
//! Models and reports are opaque heap handles released with their `_free`
//! functions. Every fallible call returns a [`GmfStatus`]; on failure the
//! message is available from [`gmf_last_error_message`] on the same thread.
//! Panics are caught at the boundary and reported as `GMF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gmf_core::bp::{run_bp, BpConfig};
use gmf_core::clustering::Partition;
use gmf_core::exact::{all_node_marginals, DEFAULT_CAP};
use gmf_core::experiment::PartitionScheme;
use gmf_core::gmf::{run_gmf, GmfConfig, Init};
use gmf_core::report::RunReport;
use gmf_core::{Error, FactorGraph};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmfStatus {
    Ok = 0,
    NullPointer = -1,
    Domain = -2,
    Capacity = -3,
    State = -4,
    Numerical = -5,
    Parse = -6,
    Io = -7,
    Panic = -8,
}

/// Inference settings; start from [`gmf_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmfOptions {
    pub seed: u64,
    pub tolerance: f64,
    /// GMF sweep limit; also the BP iteration limit.
    pub max_sweeps: usize,
    pub restarts: usize,
    pub cap: usize,
    /// BP damping in [0, 1).
    pub damping: f64,
    /// Nonzero for random initialization, zero for uniform.
    pub random_init: i32,
}

/// Opaque model handle.
pub struct GmfModel {
    graph: FactorGraph,
}

/// Opaque run report handle.
pub struct GmfReport {
    report: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GmfStatus {
    match e {
        Error::Domain(_) => GmfStatus::Domain,
        Error::Capacity { .. } => GmfStatus::Capacity,
        Error::State(_) => GmfStatus::State,
        Error::Numerical(_) => GmfStatus::Numerical,
        Error::Io(_) => GmfStatus::Io,
        Error::Parse(_) => GmfStatus::Parse,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GmfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GmfStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside gmf".into());
            GmfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::Domain(format!("{what} is not valid UTF-8"))))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed_report(out: *mut *mut GmfReport, report: RunReport) -> Result<(), Failure> {
    unsafe { put(out, Box::into_raw(Box::new(GmfReport { report })), "out") }
}

/// Default options: seed 0, tolerance 1e-6, 1000 sweeps, 1 restart,
/// default cap, no damping, random initialization.
#[no_mangle]
pub extern "C" fn gmf_options_default() -> GmfOptions {
    GmfOptions {
        seed: 0,
        tolerance: 1e-6,
        max_sweeps: 1000,
        restarts: 1,
        cap: DEFAULT_CAP,
        damping: 0.0,
        random_init: 1,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn gmf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_load_json(json: *const c_char, out: *mut *mut GmfModel) -> GmfStatus {
    guard(|| {
        let graph = FactorGraph::from_json_str(str_arg(json, "json")?)?;
        put(out, Box::into_raw(Box::new(GmfModel { graph })), "out")
    })
}

/// Read a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_load_file(path: *const c_char, out: *mut *mut GmfModel) -> GmfStatus {
    guard(|| {
        let graph = FactorGraph::load(str_arg(path, "path")?)?;
        put(out, Box::into_raw(Box::new(GmfModel { graph })), "out")
    })
}

/// Release a model; NULL is ignored.
///
/// # Safety
/// `model` must come from a `gmf_model_load_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_free(model: *mut GmfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_num_variables(model: *const GmfModel, out: *mut usize) -> GmfStatus {
    guard(|| put(out, deref(model, "model")?.graph.num_variables(), "out"))
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_cardinality(model: *const GmfModel, var: usize, out: *mut usize) -> GmfStatus {
    guard(|| {
        let g = &deref(model, "model")?.graph;
        if var >= g.num_variables() {
            return Err(Error::Domain(format!("unknown variable {var}")).into());
        }
        put(out, g.cardinality(var), "out")
    })
}

/// Observe `var` in `state`, replacing any previous observation.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_set_evidence(model: *mut GmfModel, var: usize, state: usize) -> GmfStatus {
    guard(|| {
        let m = model.as_mut().ok_or(Failure::Null("model"))?;
        let mut g = m.graph.clone();
        g.evidence.insert(var, state);
        g.validate()?;
        m.graph = g;
        Ok(())
    })
}

/// Remove all observations.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gmf_model_clear_evidence(model: *mut GmfModel) -> GmfStatus {
    guard(|| {
        model.as_mut().ok_or(Failure::Null("model"))?.graph.evidence.clear();
        Ok(())
    })
}

fn gmf_config(o: &GmfOptions) -> GmfConfig {
    GmfConfig {
        tolerance: o.tolerance,
        max_sweeps: o.max_sweeps,
        init: if o.random_init != 0 {
            Init::Random
        } else {
            Init::Uniform
        },
        seed: o.seed,
        restarts: o.restarts,
        cap: o.cap,
    }
}

unsafe fn options(o: *const GmfOptions) -> GmfOptions {
    o.as_ref().copied().unwrap_or_else(|| gmf_options_default())
}

/// Exact marginals and log-partition. `opts` may be NULL.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_run_exact(
    model: *const GmfModel,
    opts: *const GmfOptions,
    out: *mut *mut GmfReport,
) -> GmfStatus {
    guard(|| {
        let g = &deref(model, "model")?.graph;
        let o = options(opts);
        let start = std::time::Instant::now();
        let r = all_node_marginals(g, o.cap)?;
        boxed_report(
            out,
            RunReport {
                algorithm: "exact".into(),
                elbo: None,
                elbo_trace: Vec::new(),
                log_partition: Some(r.log_partition),
                sweeps: 0,
                converged: true,
                node_marginals: r.node_marginals,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                seed: None,
                partition: None,
                restart_index: None,
            },
        )
    })
}

/// Generalized mean field. `partition` is a scheme name such as
/// `"blocks:2x2"` (square grids), `"single"`, `"singletons"`, `"mincut:k=4"`,
/// or partition JSON text `{"clusters": [[...], ...]}`. `opts` may be NULL.
///
/// # Safety
/// `model` must be a live handle, `partition` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_run_gmf(
    model: *const GmfModel,
    partition: *const c_char,
    opts: *const GmfOptions,
    out: *mut *mut GmfReport,
) -> GmfStatus {
    guard(|| {
        let g = &deref(model, "model")?.graph;
        let text = str_arg(partition, "partition")?;
        let p = if text.trim_start().starts_with('{') {
            Partition::from_json_str(text, g.num_variables())?
        } else {
            text.parse::<PartitionScheme>()?.resolve(g, None)?
        };
        let r = run_gmf(g, &p, &gmf_config(&options(opts)))?;
        boxed_report(out, r.to_report("gmf", text))
    })
}

/// Naive mean field. `opts` may be NULL.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_run_mf(
    model: *const GmfModel,
    opts: *const GmfOptions,
    out: *mut *mut GmfReport,
) -> GmfStatus {
    guard(|| {
        let g = &deref(model, "model")?.graph;
        let p = Partition::singletons(g.num_variables());
        let r = run_gmf(g, &p, &gmf_config(&options(opts)))?;
        boxed_report(out, r.to_report("mf", "singletons"))
    })
}

/// Loopy belief propagation. `opts` may be NULL.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_run_bp(
    model: *const GmfModel,
    opts: *const GmfOptions,
    out: *mut *mut GmfReport,
) -> GmfStatus {
    guard(|| {
        let g = &deref(model, "model")?.graph;
        let o = options(opts);
        let config = BpConfig {
            tolerance: o.tolerance,
            max_iters: o.max_sweeps,
            damping: o.damping,
            seed: o.seed,
        };
        boxed_report(out, run_bp(g, &config)?.to_report("bp"))
    })
}

/// Release a report; NULL is ignored.
///
/// # Safety
/// `report` must come from a `gmf_run_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_free(report: *mut GmfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Copy the marginal of `var` into `buf` (capacity `len`) and store its
/// cardinality in `written`. Observed variables have no marginal
/// (`GMF_STATUS_DOMAIN`); a short buffer gives `GMF_STATUS_CAPACITY` with
/// `written` set to the required length.
///
/// # Safety
/// `report` must be a live handle, `buf` valid for `len` doubles, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_marginal(
    report: *const GmfReport,
    var: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> GmfStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        let m = r
            .node_marginals
            .get(&var)
            .ok_or_else(|| Error::Domain(format!("no marginal for variable {var}")))?;
        put(written, m.len(), "written")?;
        if len < m.len() {
            return Err(Error::Capacity {
                what: "marginal buffer".into(),
                size: m.len() as u128,
                cap: len,
            }
            .into());
        }
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        ptr::copy_nonoverlapping(m.as_ptr(), buf, m.len());
        Ok(())
    })
}

/// ELBO of a GMF or MF report; `GMF_STATUS_STATE` for other algorithms.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_elbo(report: *const GmfReport, out: *mut f64) -> GmfStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        let v = r
            .elbo
            .ok_or_else(|| Error::State(format!("{} reports no ELBO", r.algorithm)))?;
        put(out, v, "out")
    })
}

/// Log-partition of an exact report; `GMF_STATUS_STATE` otherwise.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_log_partition(report: *const GmfReport, out: *mut f64) -> GmfStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        let v = r
            .log_partition
            .ok_or_else(|| Error::State(format!("{} reports no log-partition", r.algorithm)))?;
        put(out, v, "out")
    })
}

/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_converged(report: *const GmfReport, out: *mut i32) -> GmfStatus {
    guard(|| put(out, i32::from(deref(report, "report")?.report.converged), "out"))
}

/// GMF sweeps, or BP iterations needed to converge.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_sweeps(report: *const GmfReport, out: *mut usize) -> GmfStatus {
    guard(|| put(out, deref(report, "report")?.report.sweeps, "out"))
}

/// Serialize the report as JSON; release the string with [`gmf_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmf_report_to_json(report: *const GmfReport, out: *mut *mut c_char) -> GmfStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        let s = serde_json::to_string_pretty(r).map_err(Error::from)?;
        let c = CString::new(s).map_err(|_| Error::State("report JSON contains NUL".into()))?;
        put(out, c.into_raw(), "out")
    })
}

/// Release a string returned by this library; NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gmf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
