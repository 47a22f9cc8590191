//! C ABI for the wannier-ipp pipeline.
//!
//! Conventions: every function that can fail returns an `int32_t` status
//! (`WIP_OK` on success; otherwise the run's error class, matching the CLI
//! exit codes). Handles are opaque; free them with the matching `_free`
//! function. Strings returned by this library are NUL-terminated and owned
//! by the caller, released via `wip_string_free`. The last error message is
//! kept per thread and read with `wip_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use wannier_ipp::config::{parse_config, preset, RunConfig};
use wannier_ipp::runner::{self, IppOutcome};
use wannier_ipp::Error;

pub const WIP_OK: i32 = 0;
pub const WIP_ERR_CONFIG: i32 = 2;
pub const WIP_ERR_NO_UNIFORM_GAPS: i32 = 3;
pub const WIP_ERR_GAP_CLOSED: i32 = 4;
pub const WIP_ERR_NUMERICAL: i32 = 5;
/// Null pointer or invalid argument at the boundary itself.
pub const WIP_ERR_ARGUMENT: i32 = 100;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let cstr = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstr));
}

fn fail(e: &Error) -> i32 {
    set_error(&e.to_string());
    e.exit_code()
}

/// Opaque run configuration handle.
pub struct WipConfig {
    inner: RunConfig,
}

/// Opaque result handle for a full pipeline run.
pub struct WipResult {
    outcome: IppOutcome,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().ok()
}

/// Parse a configuration document (full config JSON or
/// {"preset": "<name>", ...overrides}).
///
/// # Safety
/// `json` must be a valid NUL-terminated UTF-8 string and `out` a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn wip_config_parse(json: *const c_char, out: *mut *mut WipConfig) -> i32 {
    if out.is_null() {
        set_error("out pointer is null");
        return WIP_ERR_ARGUMENT;
    }
    let Some(text) = (unsafe { cstr_arg(json) }) else {
        set_error("config text is null or not UTF-8");
        return WIP_ERR_ARGUMENT;
    };
    match parse_config(text) {
        Ok(cfg) => {
            unsafe { *out = Box::into_raw(Box::new(WipConfig { inner: cfg })) };
            WIP_OK
        }
        Err(e) => fail(&e),
    }
}

/// Load a named preset configuration.
///
/// # Safety
/// `name` must be a valid NUL-terminated UTF-8 string and `out` a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn wip_config_preset(name: *const c_char, out: *mut *mut WipConfig) -> i32 {
    if out.is_null() {
        set_error("out pointer is null");
        return WIP_ERR_ARGUMENT;
    }
    let Some(name) = (unsafe { cstr_arg(name) }) else {
        set_error("preset name is null or not UTF-8");
        return WIP_ERR_ARGUMENT;
    };
    match preset(name) {
        Ok(cfg) => {
            unsafe { *out = Box::into_raw(Box::new(WipConfig { inner: cfg })) };
            WIP_OK
        }
        Err(e) => fail(&e),
    }
}

/// Serialize a configuration back to JSON. Free the string with
/// `wip_string_free`.
///
/// # Safety
/// `cfg` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn wip_config_to_json(cfg: *const WipConfig) -> *mut c_char {
    if cfg.is_null() {
        set_error("config handle is null");
        return ptr::null_mut();
    }
    let cfg = unsafe { &*cfg };
    match serde_json::to_string_pretty(&cfg.inner) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `cfg` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wip_config_free(cfg: *mut WipConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Run the full pipeline in memory and hand back a result handle.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wip_run_ipp(cfg: *const WipConfig, out: *mut *mut WipResult) -> i32 {
    if cfg.is_null() || out.is_null() {
        set_error("null handle");
        return WIP_ERR_ARGUMENT;
    }
    let cfg = unsafe { &*cfg };
    let run = || -> wannier_ipp::Result<IppOutcome> {
        let prep = runner::prepare(&cfg.inner)?;
        runner::run_pipeline(&cfg.inner, &prep)
    };
    match run() {
        Ok(outcome) => {
            unsafe { *out = Box::into_raw(Box::new(WipResult { outcome })) };
            WIP_OK
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `res` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wip_result_free(res: *mut WipResult) {
    if !res.is_null() {
        drop(unsafe { Box::from_raw(res) });
    }
}

/// Number of localized functions in the result.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn wip_result_n_functions(res: *const WipResult) -> usize {
    if res.is_null() {
        return 0;
    }
    unsafe { &*res }.outcome.wannier.n_functions()
}

/// Orbital-space dimension of each function.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn wip_result_dimension(res: *const WipResult) -> usize {
    if res.is_null() {
        return 0;
    }
    unsafe { &*res }.outcome.wannier.functions.nrows()
}

/// Largest entry of |W^H W - I| over the output functions.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn wip_result_orthonormality_error(res: *const WipResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    unsafe { &*res }.outcome.wannier.orthonormality_error
}

/// Distance between the Fermi projection and the span of the outputs.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn wip_result_span_error(res: *const WipResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    unsafe { &*res }.outcome.wannier.span_error
}

/// Copy function centers into `buf` as x0, y0, x1, y1, ... `len` must be at
/// least 2 * n_functions.
///
/// # Safety
/// `res` must be a live result handle and `buf` must point to at least
/// `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wip_result_centers(
    res: *const WipResult,
    buf: *mut f64,
    len: usize,
) -> i32 {
    if res.is_null() || buf.is_null() {
        set_error("null handle or buffer");
        return WIP_ERR_ARGUMENT;
    }
    let centers = &unsafe { &*res }.outcome.wannier.centers;
    if len < 2 * centers.len() {
        set_error("centers buffer too small");
        return WIP_ERR_ARGUMENT;
    }
    for (k, c) in centers.iter().enumerate() {
        unsafe {
            *buf.add(2 * k) = c[0];
            *buf.add(2 * k + 1) = c[1];
        }
    }
    WIP_OK
}

/// Copy one function's complex amplitudes into `re`/`im`. `len` must be at
/// least the orbital dimension.
///
/// # Safety
/// `res` must be a live result handle; `re` and `im` must each point to at
/// least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wip_result_amplitudes(
    res: *const WipResult,
    function: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> i32 {
    if res.is_null() || re.is_null() || im.is_null() {
        set_error("null handle or buffer");
        return WIP_ERR_ARGUMENT;
    }
    let w = &unsafe { &*res }.outcome.wannier.functions;
    if function >= w.ncols() {
        set_error("function index out of range");
        return WIP_ERR_ARGUMENT;
    }
    if len < w.nrows() {
        set_error("amplitude buffer too small");
        return WIP_ERR_ARGUMENT;
    }
    for (i, z) in w.column(function).iter().enumerate() {
        unsafe {
            *re.add(i) = z.re;
            *im.add(i) = z.im;
        }
    }
    WIP_OK
}

/// Charge-center sweep. `out_chern` receives INT64_MIN and `out_z2` -1 when
/// the invariant does not apply to the model.
///
/// # Safety
/// `cfg` must be a live config handle; out pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn wip_run_wcc(
    cfg: *const WipConfig,
    out_chern: *mut i64,
    out_z2: *mut i32,
    out_min_branch_gap: *mut f64,
) -> i32 {
    if cfg.is_null() {
        set_error("null config handle");
        return WIP_ERR_ARGUMENT;
    }
    let cfg = &unsafe { &*cfg }.inner;
    let run = || -> wannier_ipp::Result<(Option<i64>, Option<u8>, f64)> {
        use wannier_ipp::models::ModelKind;
        if cfg.disorder.map_or(false, |d| d.variance > 0.0) {
            return Err(Error::Config("charge-center sweeps require a clean model".into()));
        }
        let wcfg = cfg.wcc.unwrap_or_default();
        let family = wannier_ipp::wcc::bloch_family(&cfg.model, wcfg.l1, wcfg.n_k)?;
        let n_occ = cfg.n_occ.unwrap_or(family.n_occ);
        let sweep = wannier_ipp::wcc::wcc_sweep(&family, n_occ, false)?;
        let min_gap = sweep.min_branch_gap();
        match cfg.model.kind() {
            ModelKind::Haldane => {
                let (c, _) = wannier_ipp::wcc::chern_from_winding(&sweep)?;
                Ok((Some(c), None, min_gap))
            }
            ModelKind::KaneMele => {
                Ok((None, Some(wannier_ipp::wcc::z2_from_wcc(&sweep)?), min_gap))
            }
            ModelKind::PxIpy => {
                Err(Error::Config("charge-center sweeps require a honeycomb model".into()))
            }
        }
    };
    match run() {
        Ok((chern, z2, min_gap)) => {
            unsafe {
                if !out_chern.is_null() {
                    *out_chern = chern.unwrap_or(i64::MIN);
                }
                if !out_z2.is_null() {
                    *out_z2 = z2.map_or(-1, |v| v as i32);
                }
                if !out_min_branch_gap.is_null() {
                    *out_min_branch_gap = min_gap;
                }
            }
            WIP_OK
        }
        Err(e) => fail(&e),
    }
}

/// Execute a subcommand ("spectrum", "ipp", "wcc", or "diagnose") writing
/// artifacts and a checksummed manifest to `out_dir`.
///
/// # Safety
/// `cfg` must be a live config handle; `command` and `out_dir` must be
/// valid NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn wip_run_artifacts(
    cfg: *const WipConfig,
    command: *const c_char,
    out_dir: *const c_char,
) -> i32 {
    if cfg.is_null() {
        set_error("null config handle");
        return WIP_ERR_ARGUMENT;
    }
    let (Some(command), Some(out_dir)) =
        (unsafe { cstr_arg(command) }, unsafe { cstr_arg(out_dir) })
    else {
        set_error("command or out_dir is null or not UTF-8");
        return WIP_ERR_ARGUMENT;
    };
    let cfg = &unsafe { &*cfg }.inner;
    let dir = Path::new(out_dir);
    let result = match command {
        "spectrum" => runner::cmd_spectrum(cfg, dir),
        "ipp" => runner::cmd_ipp(cfg, dir),
        "wcc" => runner::cmd_wcc(cfg, dir),
        "diagnose" => runner::cmd_diagnose(cfg, dir),
        other => {
            set_error(&format!("unknown command '{other}'"));
            return WIP_ERR_ARGUMENT;
        }
    };
    match result {
        Ok(()) => WIP_OK,
        Err(e) => fail(&e),
    }
}

/// Last error message for this thread, or null when none. Free with
/// `wip_string_free`.
#[no_mangle]
pub extern "C" fn wip_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must be a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wip_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
