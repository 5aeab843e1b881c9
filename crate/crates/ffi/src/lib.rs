//! C ABI for `dimlift`.
//!
//! Every fallible function returns a [`DlStatus`]; on failure the message is
//! available from [`dl_last_error`] on the same thread. Matrices are passed
//! as row-major `double` buffers with explicit dimensions. Models live behind
//! the opaque [`DlModel`] handle and must be released with [`dl_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dimlift::consistent::{SequenceKind, SizedObject};
use dimlift::metrics::{cut_bounds, gw_tlb, hausdorff, wasserstein_1d, wasserstein_assign, EmpiricalMeasure};
use dimlift::models::audit::random_compat_check;
use dimlift::models::{Model, ModelSpec, ParamStore};
use dimlift::{Error, Matrix};

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    InvalidInput = 1,
    Embed = 2,
    Norm = 3,
    SizeCap = 4,
    Fit = 5,
    TrainDiverged = 6,
    Config = 7,
    Parse = 8,
    Io = 9,
    NullPointer = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Opaque model handle.
pub struct DlModel {
    model: Model,
}

/// Input kinds for [`dl_model_predict`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlInputKind {
    Set = 0,
    Graph = 1,
    PointCloud = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DlStatus {
    match e {
        Error::InvalidInput(_) => DlStatus::InvalidInput,
        Error::Embed(_) => DlStatus::Embed,
        Error::Norm(_) => DlStatus::Norm,
        Error::SizeCapExceeded { .. } => DlStatus::SizeCap,
        Error::Fit(_) => DlStatus::Fit,
        Error::TrainDiverged { .. } => DlStatus::TrainDiverged,
        Error::Config { .. } => DlStatus::Config,
        Error::Parse(_) => DlStatus::Parse,
        Error::Io(_) => DlStatus::Io,
    }
}

struct Fail(DlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DlStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("panic inside dimlift".into());
            DlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Fail> {
    let n = rows.checked_mul(cols).ok_or_else(|| Fail(DlStatus::InvalidInput, format!("{what} is too large")))?;
    Ok(Matrix::from_vec(rows, cols, slice(p, n, what)?.to_vec())?)
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DlStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

fn parse_spec(json: &str) -> Result<ModelSpec, Fail> {
    let spec: ModelSpec = serde_json::from_str(json).map_err(|e| Fail(DlStatus::Config, e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, k);
            *buf.add(k) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a model from a JSON `ModelSpec` with seeded initialization.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_model_new(spec_json: *const c_char, seed: u64, out: *mut *mut DlModel) -> DlStatus {
    guard(|| {
        let spec = parse_spec(string(spec_json, "spec_json")?)?;
        let model = Model::new(spec, seed)?;
        write_out(out, Box::into_raw(Box::new(DlModel { model })), "out")
    })
}

/// Creates a model from a JSON `ModelSpec` and a parameter file.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_model_load(
    spec_json: *const c_char,
    params_path: *const c_char,
    out: *mut *mut DlModel,
) -> DlStatus {
    guard(|| {
        let spec = parse_spec(string(spec_json, "spec_json")?)?;
        let params = ParamStore::load(Path::new(string(params_path, "params_path")?))?;
        let model = Model::with_params(spec, params)?;
        write_out(out, Box::into_raw(Box::new(DlModel { model })), "out")
    })
}

/// Writes the model's parameters to `path`.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_model_save(model: *const DlModel, path: *const c_char) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.model.params.save(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_model_free(model: *mut DlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_model_param_count(model: *const DlModel, out: *mut usize) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_out(out, m.model.param_count(), "out")
    })
}

/// Evaluates the model. `x` is `rows x cols`; graphs also pass the
/// `rows x rows` adjacency `adj`. The prediction (`1 x out_dim` for invariant
/// models, `rows x out_dim` for graph models) is written row-major to `out`;
/// `written` receives its length. Returns `BufferTooSmall` (with `written`
/// set) when `cap` is insufficient.
///
/// # Safety
/// Buffers must be valid for the stated lengths; `adj` may be null for
/// non-graph inputs.
#[no_mangle]
pub unsafe extern "C" fn dl_model_predict(
    model: *const DlModel,
    kind: DlInputKind,
    x: *const f64,
    rows: usize,
    cols: usize,
    adj: *const f64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let xm = matrix(x, rows, cols, "x")?;
        let input = match kind {
            DlInputKind::Set => SizedObject::set(xm)?,
            DlInputKind::PointCloud => SizedObject::cloud(xm)?,
            DlInputKind::Graph => SizedObject::graph(matrix(adj, rows, rows, "adj")?, xm)?,
        };
        let pred = m.model.predict(&input)?;
        write_out(written, pred.data().len(), "written")?;
        if pred.data().len() > cap {
            return Err(Fail(DlStatus::BufferTooSmall, format!("need {} values", pred.data().len())));
        }
        if !pred.data().is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            std::ptr::copy_nonoverlapping(pred.data().as_ptr(), out, pred.data().len());
        }
        Ok(())
    })
}

/// Randomized compatibility check of `model` under the sequence named
/// `seq` (e.g. `"dup-set"`), on `trials` gaussian inputs per size and every
/// multiple. `pass` receives 1 or 0.
///
/// # Safety
/// Arrays must be valid for their lengths; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_compat_check(
    model: *const DlModel,
    seq: *const c_char,
    sizes: *const usize,
    n_sizes: usize,
    multiples: *const usize,
    n_multiples: usize,
    trials: usize,
    seed: u64,
    max_relative: *mut f64,
    pass: *mut i32,
) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let seq: SequenceKind = serde_json::from_value(serde_json::Value::String(string(seq, "seq")?.into()))
            .map_err(|e| Fail(DlStatus::InvalidInput, e.to_string()))?;
        if sizes.is_null() || multiples.is_null() {
            return Err(null("sizes or multiples"));
        }
        let sizes = std::slice::from_raw_parts(sizes, n_sizes);
        let multiples = std::slice::from_raw_parts(multiples, n_multiples);
        let rep = random_compat_check(&m.model, seq, sizes, multiples, trials, seed)?;
        write_out(max_relative, rep.max_relative, "max_relative")?;
        write_out(pass, rep.pass as i32, "pass")
    })
}

/// 1D `W_p` between the uniform measures on `x` and `y`.
///
/// # Safety
/// Buffers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_wasserstein_1d(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    p: f64,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        let v = wasserstein_1d(slice(x, nx, "x")?, slice(y, ny, "y")?, p)?;
        write_out(out, v, "out")
    })
}

/// `W_p` between uniform measures on the rows of `x` (`nx x d`) and `y` (`ny x d`).
///
/// # Safety
/// Buffers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_wasserstein_assign(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    d: usize,
    p: f64,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        let a = EmpiricalMeasure::new(matrix(x, nx, d, "x")?)?;
        let b = EmpiricalMeasure::new(matrix(y, ny, d, "y")?)?;
        write_out(out, wasserstein_assign(&a, &b, p)?, "out")
    })
}

/// Cut-norm bracket of a symmetric `n x n` matrix with zero signal.
/// `has_exact` is 1 when `exact` was computed.
///
/// # Safety
/// `a` must be valid for `n*n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_cut_bounds(
    a: *const f64,
    n: usize,
    lower: *mut f64,
    upper: *mut f64,
    exact: *mut f64,
    has_exact: *mut i32,
) -> DlStatus {
    guard(|| {
        let c = cut_bounds(&matrix(a, n, n, "a")?, &Matrix::zeros(n, 1))?;
        write_out(lower, c.lower, "lower")?;
        write_out(upper, c.upper, "upper")?;
        write_out(exact, c.exact.unwrap_or(f64::NAN), "exact")?;
        write_out(has_exact, c.exact.is_some() as i32, "has_exact")
    })
}

/// Hausdorff distance between the row sets of `x` and `y` (both `* x d`).
///
/// # Safety
/// Buffers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_hausdorff(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    d: usize,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        let v = hausdorff(&matrix(x, nx, d, "x")?, &matrix(y, ny, d, "y")?)?;
        write_out(out, v, "out")
    })
}

/// Gromov–Wasserstein third lower bound between point clouds `x` (`nx x kx`)
/// and `y` (`ny x ky`).
///
/// # Safety
/// Buffers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_gw_tlb(
    x: *const f64,
    nx: usize,
    kx: usize,
    y: *const f64,
    ny: usize,
    ky: usize,
    p: f64,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        let v = gw_tlb(&matrix(x, nx, kx, "x")?, &matrix(y, ny, ky, "y")?, p)?;
        write_out(out, v, "out")
    })
}
