//! C ABI over `gcm-core`.
//!
//! Datasets and models are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`GcmStatus`]; on failure the
//! message is available from [`gcm_last_error_message`] on the same thread
//! until the next failing call, and output handles are left untouched.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use gcm_core::eval::evaluate_model;
use gcm_core::io::model_file::{ModelFile, ModelMetadata, Provenance};
use gcm_core::train::{train, Algorithm, TrainOptions};
use gcm_core::{Candidate, Dataset, Error, Hyperparams, Label};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcmStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a length that does not match.
    InvalidArgument = 1,
    /// Parameter out of range or unusable configuration.
    Config = 2,
    /// Malformed, inconsistent or dimension-mismatched data.
    Data = 3,
    /// The solver produced non-finite values.
    Numerical = 4,
    /// File could not be read or written.
    Io = 5,
    /// Internal error; the library state is unaffected.
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcmAlgorithm {
    Gcm = 0,
    GcmNoGroup = 1,
    Svm = 2,
    MiSvm = 3,
}

impl From<GcmAlgorithm> for Algorithm {
    fn from(a: GcmAlgorithm) -> Self {
        match a {
            GcmAlgorithm::Gcm => Algorithm::Gcm,
            GcmAlgorithm::GcmNoGroup => Algorithm::GcmNoGroup,
            GcmAlgorithm::Svm => Algorithm::Svm,
            GcmAlgorithm::MiSvm => Algorithm::MiSvm,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GcmHyperparams {
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GcmEvalSummary {
    pub candidate_auc: f64,
    pub group_auc: f64,
}

/// Opaque dataset handle.
pub struct GcmDataset(Dataset);

/// Opaque model handle: weights plus the preprocessing stored with them.
pub struct GcmModel(ModelFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> GcmStatus {
    match err {
        Error::Io(_) => GcmStatus::Io,
        _ => match err.exit_code() {
            2 => GcmStatus::Config,
            4 => GcmStatus::Numerical,
            _ => GcmStatus::Data,
        },
    }
}

struct Failure(GcmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(GcmStatus::InvalidArgument, msg.to_string())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GcmStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(invalid("path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    out.write(value);
    Ok(())
}

/// Boxes `value` into `*out`; nothing is allocated when `out` is null.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn gcm_default_hyperparams() -> GcmHyperparams {
    let hp = Hyperparams::default();
    GcmHyperparams {
        lambda: hp.lambda,
        epsilon: hp.epsilon,
        delta: hp.delta,
    }
}

/// Loads a text or binary dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_dataset_load(path: *const c_char, out: *mut *mut GcmDataset) -> GcmStatus {
    guard(|| {
        let data = gcm_core::io::load(&path_arg(path)?, None)?;
        emit(out, GcmDataset(data))
    })
}

/// Builds a dataset from column arrays of `n_rows` entries; `features` is
/// row-major with `dim` values per row. Labels are +1 or -1, key flags 0 or 1.
///
/// # Safety
/// Every array must hold the stated number of elements and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_dataset_from_arrays(
    n_rows: usize,
    dim: usize,
    group_ids: *const u64,
    labels: *const i8,
    is_key: *const u8,
    features: *const f64,
    out: *mut *mut GcmDataset,
) -> GcmStatus {
    guard(|| {
        let ids = slice_arg(group_ids, n_rows, "group_ids")?;
        let labels = slice_arg(labels, n_rows, "labels")?;
        let keys = slice_arg(is_key, n_rows, "is_key")?;
        let len = n_rows.checked_mul(dim).ok_or_else(|| invalid("n_rows * dim overflows"))?;
        let x = slice_arg(features, len, "features")?;
        let mut cands = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            let label = Label::from_i8(labels[i])
                .ok_or_else(|| Failure(GcmStatus::Data, format!("row {i}: label must be +1 or -1")))?;
            if keys[i] > 1 {
                return Err(Failure(GcmStatus::Data, format!("row {i}: key flag must be 0 or 1")));
            }
            cands.push(Candidate {
                group_id: ids[i],
                label,
                is_key: keys[i] == 1,
                features: x[i * dim..(i + 1) * dim].to_vec(),
            });
        }
        let data = Dataset::new(dim, cands)?;
        emit(out, GcmDataset(data))
    })
}

/// # Safety
/// `data` must come from this library and not be used afterwards; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gcm_dataset_free(data: *mut GcmDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live dataset handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn gcm_dataset_shape(
    data: *const GcmDataset,
    n_rows: *mut usize,
    dim: *mut usize,
    n_groups: *mut usize,
) -> GcmStatus {
    guard(|| {
        let d = &ref_arg(data, "dataset")?.0;
        for (ptr, v) in [(n_rows, d.n_rows()), (dim, d.dim()), (n_groups, d.groups().len())] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// Trains `algorithm` on `data` with `threads` workers (0 means 1).
///
/// # Safety
/// `data` and `hp` must be valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_train(
    data: *const GcmDataset,
    algorithm: GcmAlgorithm,
    hp: *const GcmHyperparams,
    threads: usize,
    out: *mut *mut GcmModel,
) -> GcmStatus {
    guard(|| {
        let d = &ref_arg(data, "dataset")?.0;
        let h = ref_arg(hp, "hyperparams")?;
        let hp = Hyperparams::new(h.lambda, h.epsilon, h.delta)?;
        let opts = TrainOptions {
            threads: threads.max(1),
            ..TrainOptions::default()
        };
        let algo = Algorithm::from(algorithm);
        let report = train(d, algo, &hp, &opts)?;
        let provenance = Provenance {
            outer_iterations: report.outer_iterations,
            solver: Some(opts.solver.clone()),
            threads: Some(opts.threads),
            ..Provenance::from_trace(&report.trace)
        };
        let file = ModelFile::new(
            report.model,
            ModelMetadata {
                algorithm: algo,
                hyperparams: hp,
                input_dim: d.dim(),
                scaler: None,
                expansion: None,
                provenance,
            },
        )?;
        emit(out, GcmModel(file))
    })
}

/// # Safety
/// `model` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_save(model: *const GcmModel, path: *const c_char) -> GcmStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        m.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_load(path: *const c_char, out: *mut *mut GcmModel) -> GcmStatus {
    guard(|| {
        let file = ModelFile::load(&path_arg(path)?)?;
        emit(out, GcmModel(file))
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_free(model: *mut GcmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Raw input width the model expects.
///
/// # Safety
/// `model` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_input_dim(model: *const GcmModel, out: *mut usize) -> GcmStatus {
    guard(|| write_out(out, ref_arg(model, "model")?.0.metadata.input_dim))
}

/// Length of the weight vector (feature count after expansion).
///
/// # Safety
/// `model` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_feature_dim(model: *const GcmModel, out: *mut usize) -> GcmStatus {
    guard(|| write_out(out, ref_arg(model, "model")?.0.model.w.len()))
}

/// Copies the weight vector into `weights` (`len` must equal the model's
/// feature count after expansion) and the bias into `bias`.
///
/// # Safety
/// `weights` must hold `len` doubles; `bias` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_weights(
    model: *const GcmModel,
    weights: *mut f64,
    len: usize,
    bias: *mut f64,
) -> GcmStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0.model;
        if len != m.w.len() {
            return Err(Failure(
                GcmStatus::InvalidArgument,
                format!("weight buffer holds {len} values, model has {}", m.w.len()),
            ));
        }
        if len > 0 {
            if weights.is_null() {
                return Err(invalid("weights is null"));
            }
            std::slice::from_raw_parts_mut(weights, len).copy_from_slice(&m.w);
        }
        write_out(bias, m.b)
    })
}

/// Score of one raw input row of `len` features.
///
/// # Safety
/// `x` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_model_score(model: *const GcmModel, x: *const f64, len: usize, out: *mut f64) -> GcmStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let row = slice_arg(x, len, "x")?;
        write_out(out, m.score_row(row)?)
    })
}

/// Candidate- and group-level AUC of `model` on `data`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcm_evaluate(
    model: *const GcmModel,
    data: *const GcmDataset,
    out: *mut GcmEvalSummary,
) -> GcmStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let d = &ref_arg(data, "dataset")?.0;
        let (report, _) = evaluate_model(&m.model, &m.prepare(d)?)?;
        write_out(
            out,
            GcmEvalSummary {
                candidate_auc: report.candidate_auc,
                group_auc: report.group_auc,
            },
        )
    })
}
