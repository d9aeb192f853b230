//! C ABI over `rtdm-core`.
//!
//! Objects cross the boundary as opaque handles created by `rtdm_*_new`-style
//! functions and released by the matching `*_free`. Every fallible call returns
//! an [`RtdmStatus`]; on failure the message is available from
//! [`rtdm_last_error`] on the same thread until the next failing call.
//! Matrices are dense, column-major, one observation or component per column.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use rtdm_core::data::Dataset;
use rtdm_core::decomposition::{tdm, DecompositionResult, PowerOptions};
use rtdm_core::error::Error;
use rtdm_core::moments::ModelConstants;
use rtdm_core::regularizers::{build_tree_distance, HeadingTree, Regularizer};
use rtdm_core::rtdm::{rtdm_run, RtdmConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtdmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtdmModelKind {
    Gmm = 0,
    Lda = 1,
}

/// Observations, one per column.
pub struct RtdmDataset(Dataset);

pub struct RtdmRegularizer(Regularizer);

/// Output of a fit: the reported parameters, and for regularized fits the
/// unregularized baseline and optimization summary.
pub struct RtdmResult {
    result: DecompositionResult,
    baseline: Option<DecompositionResult>,
    iterations: usize,
    converged: bool,
    reg_value: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

struct Failure(RtdmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => RtdmStatus::Io,
            e if e.is_numeric() => RtdmStatus::Numeric,
            _ => RtdmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RtdmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(RtdmStatus::InvalidArgument, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RtdmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtdmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            RtdmStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Failure> {
    let slot = p.as_mut().ok_or_else(|| null("output pointer"))?;
    *slot = ptr::null_mut();
    Ok(slot)
}

unsafe fn matrix(data: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
    if len == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    if data.is_null() {
        return Err(null("matrix data"));
    }
    Ok(DMatrix::from_column_slice(rows, cols, std::slice::from_raw_parts(data, len)))
}

unsafe fn string<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn constants(model: RtdmModelKind, k: usize, alpha_b: f64, sigma2: f64) -> ModelConstants {
    match model {
        RtdmModelKind::Gmm => ModelConstants::gmm(k, (!sigma2.is_nan()).then_some(sigma2)),
        RtdmModelKind::Lda => ModelConstants::lda(k, alpha_b),
    }
}

fn boxed<T>(slot: &mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len < src.len() {
        return Err(Failure(
            RtdmStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} required", src.len()),
        ));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn rtdm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Copies `dim * n` column-major values.
///
/// # Safety
/// `data` must point to `dim * n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_dataset_new(data: *const f64, dim: usize, n: usize, out: *mut *mut RtdmDataset) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let x = Dataset::new(matrix(data, dim, n)?);
        if x.x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("data contains non-finite values"));
        }
        boxed(slot, RtdmDataset(x));
        Ok(())
    })
}

/// Reads a headerless CSV file with one observation per row.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_dataset_load_csv(path: *const c_char, out: *mut *mut RtdmDataset) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let x = Dataset::load(std::path::Path::new(string(path, "path")?))?;
        boxed(slot, RtdmDataset(x));
        Ok(())
    })
}

/// # Safety
/// `x` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_dataset_dim(x: *const RtdmDataset) -> usize {
    x.as_ref().map_or(0, |x| x.0.dim())
}

/// # Safety
/// `x` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_dataset_len(x: *const RtdmDataset) -> usize {
    x.as_ref().map_or(0, |x| x.0.len())
}

/// # Safety
/// `x` must be null or a handle from `rtdm_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rtdm_dataset_free(x: *mut RtdmDataset) {
    if !x.is_null() {
        drop(Box::from_raw(x));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_gaussian_prior(sigma_m2: f64, out: *mut *mut RtdmRegularizer) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        if !(sigma_m2 > 0.0) {
            return Err(invalid(format!("sigma_m2 must be positive, got {sigma_m2}")));
        }
        boxed(slot, RtdmRegularizer(Regularizer::GaussianPrior { sigma_m2 }));
        Ok(())
    })
}

/// Distance to a `dim × k` column-major reference matrix.
///
/// # Safety
/// `prior` must point to `dim * k` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_transfer(prior: *const f64, dim: usize, k: usize, out: *mut *mut RtdmRegularizer) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let prior = matrix(prior, dim, k)?;
        boxed(slot, RtdmRegularizer(Regularizer::TransferL2 { prior }));
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_anti_correlation(out: *mut *mut RtdmRegularizer) -> RtdmStatus {
    guard(|| {
        boxed(out_slot(out)?, RtdmRegularizer(Regularizer::AntiCorrelation));
        Ok(())
    })
}

/// Tree-distance regularizer over a heading tree in the text format read by the CLI.
///
/// # Safety
/// `tree_text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_tree(tree_text: *const c_char, out: *mut *mut RtdmRegularizer) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let tree = HeadingTree::parse(string(tree_text, "tree_text")?)?;
        let (_, o_star) = build_tree_distance(&tree);
        boxed(slot, RtdmRegularizer(Regularizer::TreeDistance { o_star }));
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_sparsity(alpha_a: f64, out: *mut *mut RtdmRegularizer) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        if !(alpha_a > 0.0) {
            return Err(invalid(format!("alpha_a must be positive, got {alpha_a}")));
        }
        boxed(slot, RtdmRegularizer(Regularizer::DirichletSparsity { alpha_a }));
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a live regularizer handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularizer_free(r: *mut RtdmRegularizer) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Unregularized tensor decomposition. For GMM a NaN `sigma2` estimates the noise
/// variance from the data; `alpha_b` is ignored. For LDA `sigma2` is ignored.
///
/// # Safety
/// `x` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_fit(
    x: *const RtdmDataset,
    model: RtdmModelKind,
    k: usize,
    alpha_b: f64,
    sigma2: f64,
    out: *mut *mut RtdmResult,
) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let x = handle(x, "dataset")?;
        let result = tdm(&x.0, &constants(model, k, alpha_b, sigma2), &PowerOptions::default())?;
        boxed(
            slot,
            RtdmResult { result, baseline: None, iterations: 0, converged: true, reg_value: f64::NAN },
        );
        Ok(())
    })
}

/// Regularized decomposition. `config_json` holds optimizer settings as a JSON
/// object (`lambda`, `n_p`, `max_iters`, `seed`, ...); null uses the defaults.
///
/// # Safety
/// `x` and `reg` must be live handles, `config_json` null or NUL-terminated, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtdm_regularize(
    x: *const RtdmDataset,
    model: RtdmModelKind,
    k: usize,
    alpha_b: f64,
    sigma2: f64,
    reg: *const RtdmRegularizer,
    config_json: *const c_char,
    out: *mut *mut RtdmResult,
) -> RtdmStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let x = handle(x, "dataset")?;
        let reg = handle(reg, "regularizer")?;
        let cfg: RtdmConfig = if config_json.is_null() {
            RtdmConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?).map_err(|e| invalid(format!("config_json: {e}")))?
        };
        let run = rtdm_run(&x.0, &constants(model, k, alpha_b, sigma2), reg.0.clone(), &cfg, None)?;
        boxed(
            slot,
            RtdmResult {
                result: run.result,
                baseline: Some(run.baseline),
                iterations: run.trace.len(),
                converged: run.converged,
                reg_value: run.reg_value,
            },
        );
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_dim(r: *const RtdmResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.a.nrows())
}

/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_k(r: *const RtdmResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.a.ncols())
}

/// Copies the `dim × k` parameters, column-major, into `out` of capacity `len`.
///
/// # Safety
/// `r` must be a live result handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_params(r: *const RtdmResult, out: *mut f64, len: usize) -> RtdmStatus {
    guard(|| copy_out(handle(r, "result")?.result.a.as_slice(), out, len))
}

/// Copies the unregularized parameters; equal to the parameters for plain fits.
///
/// # Safety
/// `r` must be a live result handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_baseline_params(r: *const RtdmResult, out: *mut f64, len: usize) -> RtdmStatus {
    guard(|| {
        let r = handle(r, "result")?;
        copy_out(r.baseline.as_ref().unwrap_or(&r.result).a.as_slice(), out, len)
    })
}

/// Copies the `k` component weights.
///
/// # Safety
/// `r` must be a live result handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_weights(r: *const RtdmResult, out: *mut f64, len: usize) -> RtdmStatus {
    guard(|| copy_out(&handle(r, "result")?.result.weights, out, len))
}

/// Optimizer iterations run; zero for plain fits.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_iterations(r: *const RtdmResult) -> usize {
    r.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_converged(r: *const RtdmResult) -> bool {
    r.as_ref().is_some_and(|r| r.converged)
}

/// Unweighted regularizer value at the result; NaN for plain fits.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_reg_value(r: *const RtdmResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.reg_value)
}

/// # Safety
/// `r` must be null or a handle from `rtdm_fit`/`rtdm_regularize` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rtdm_result_free(r: *mut RtdmResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_status() {
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x"));
        assert_eq!(Failure::from(io).0, RtdmStatus::Io);
        assert_eq!(Failure::from(Error::Numeric("x".into())).0, RtdmStatus::Numeric);
        assert_eq!(Failure::from(Error::Config("x".into())).0, RtdmStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), RtdmStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rtdm_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn nan_sigma_means_estimate() {
        assert_eq!(constants(RtdmModelKind::Gmm, 2, 0.0, f64::NAN).sigma2, None);
        assert_eq!(constants(RtdmModelKind::Gmm, 2, 0.0, 0.5).sigma2, Some(0.5));
    }
}
