//! C interface to the `erank` library.
//!
//! Every function returns an [`ErankStatus`]. Results go through out
//! pointers, which are written only on success. After a failure,
//! [`erank_last_error`] describes it on the calling thread.
//!
//! Matrices are passed row-major with one embedding vector per row.
//! Handles come from `*_open`/`*_get` functions and must be released with the
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use erank::data_model::{EmbeddingIndex, EmbeddingSet};
use erank::metrics::auroc;
use erank::spectral::{build_matrix, effective_rank, eigenscore, singular_spectrum, EmbeddingMatrix, SingularSpectrum};
use erank::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErankStatus {
    Ok = 0,
    NullPointer = 1,
    /// Arguments outside the function's domain, or invalid data.
    InvalidArgument = 2,
    Format = 3,
    NotFound = 4,
    Corruption = 5,
    Numerical = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// An indexed embedding file held in memory.
pub struct ErankEmbeddingStore {
    bytes: Vec<u8>,
    index: EmbeddingIndex,
}

/// The vectors of one record.
pub struct ErankEmbeddingSet {
    inner: EmbeddingSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ErankStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Validation(_) | Error::Domain(_) | Error::Parse { .. } | Error::Overflow { .. } => {
                ErankStatus::InvalidArgument
            }
            Error::Format(_) => ErankStatus::Format,
            Error::NotFound(_) => ErankStatus::NotFound,
            Error::Corruption { .. } => ErankStatus::Corruption,
            Error::Numerical(_) => ErankStatus::Numerical,
            Error::Io(_) => ErankStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ErankStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ErankStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ErankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ErankStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            ErankStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

/// `rows x cols` row-major vectors as a matrix with one column per row.
unsafe fn matrix(data: *const f64, rows: usize, cols: usize) -> Result<EmbeddingMatrix, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
    if len == 0 {
        return Err(invalid("matrix must be non-empty"));
    }
    let values = slice(data, len, "data")?;
    let columns: Vec<&[f64]> = values.chunks(cols).collect();
    Ok(EmbeddingMatrix::from_columns(&columns)?)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn erank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Effective rank of a singular-value spectrum in any order.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out_rank` to a writable one.
#[no_mangle]
pub unsafe extern "C" fn erank_effective_rank_from_spectrum(values: *const f64, len: usize, out_rank: *mut f64) -> ErankStatus {
    guard(|| {
        let values = slice(values, len, "values")?;
        let spectrum = SingularSpectrum::from_unsorted(values.to_vec())?;
        *out(out_rank, "out_rank")? = effective_rank(&spectrum)?.effective_rank;
        Ok(())
    })
}

/// Effective rank of `rows` vectors of length `cols`.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn erank_effective_rank(data: *const f64, rows: usize, cols: usize, out_rank: *mut f64) -> ErankStatus {
    guard(|| {
        let m = matrix(data, rows, cols)?;
        *out(out_rank, "out_rank")? = effective_rank(&singular_spectrum(&m)?)?.effective_rank;
        Ok(())
    })
}

/// Eigenscore of `rows >= 2` vectors of length `cols` with regulariser `alpha > 0`.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn erank_eigenscore(
    data: *const f64,
    rows: usize,
    cols: usize,
    alpha: f64,
    out_score: *mut f64,
) -> ErankStatus {
    guard(|| {
        let m = matrix(data, rows, cols)?;
        *out(out_score, "out_score")? = eigenscore(&m, alpha)?.score;
        Ok(())
    })
}

/// AUROC of `scores` against `labels` (non-zero = hallucination).
///
/// # Safety
/// Both arrays must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn erank_auroc(scores: *const f64, labels: *const u8, len: usize, out_auroc: *mut f64) -> ErankStatus {
    guard(|| {
        let scores = slice(scores, len, "scores")?;
        let labels: Vec<bool> = slice(labels, len, "labels")?.iter().map(|&l| l != 0).collect();
        *out(out_auroc, "out_auroc")? = auroc(scores, &labels)?;
        Ok(())
    })
}

/// ROUGE-L F1 between two UTF-8 strings.
///
/// # Safety
/// Both strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn erank_rouge_l(candidate: *const c_char, reference: *const c_char, out_score: *mut f64) -> ErankStatus {
    guard(|| {
        let c = string(candidate, "candidate")?;
        let r = string(reference, "reference")?;
        *out(out_score, "out_score")? = erank::annotation::rouge_l(c, r);
        Ok(())
    })
}

/// Reads and indexes an embedding file.
///
/// # Safety
/// `path` must be NUL-terminated; `out_store` must be writable.
#[no_mangle]
pub unsafe extern "C" fn erank_store_open(path: *const c_char, out_store: *mut *mut ErankEmbeddingStore) -> ErankStatus {
    guard(|| {
        let path = string(path, "path")?;
        let slot = out(out_store, "out_store")?;
        let bytes = fs::read(path).map_err(Error::from)?;
        let index = EmbeddingIndex::build(Cursor::new(&bytes))?;
        *slot = Box::into_raw(Box::new(ErankEmbeddingStore { bytes, index }));
        Ok(())
    })
}

/// Number of blocks in the store.
///
/// # Safety
/// `store` must come from [`erank_store_open`].
#[no_mangle]
pub unsafe extern "C" fn erank_store_len(store: *const ErankEmbeddingStore, out_len: *mut usize) -> ErankStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        *out(out_len, "out_len")? = store.index.len();
        Ok(())
    })
}

/// Loads the block stored under `record_id`.
///
/// # Safety
/// `store` must come from [`erank_store_open`]; `record_id` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn erank_store_get(
    store: *const ErankEmbeddingStore,
    record_id: *const c_char,
    out_set: *mut *mut ErankEmbeddingSet,
) -> ErankStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let id = string(record_id, "record_id")?;
        let slot = out(out_set, "out_set")?;
        let inner = store.index.load(Cursor::new(&store.bytes), id)?;
        *slot = Box::into_raw(Box::new(ErankEmbeddingSet { inner }));
        Ok(())
    })
}

/// Releases a store. NULL is ignored.
///
/// # Safety
/// `store` must come from [`erank_store_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn erank_store_free(store: *mut ErankEmbeddingStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Shape of a set: `m1` responses, `m2` layers each, dimension `n`.
///
/// # Safety
/// `set` must come from [`erank_store_get`]; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn erank_set_shape(
    set: *const ErankEmbeddingSet,
    out_m1: *mut usize,
    out_m2: *mut usize,
    out_n: *mut usize,
) -> ErankStatus {
    guard(|| {
        let s = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        let (a, b, c) = (out(out_m1, "out_m1")?, out(out_m2, "out_m2")?, out(out_n, "out_n")?);
        (*a, *b, *c) = (s.m1(), s.m2(), s.n());
        Ok(())
    })
}

/// Pointer to the `m1 * m2 * n` row-major values, owned by the set.
///
/// # Safety
/// `set` must come from [`erank_store_get`].
#[no_mangle]
pub unsafe extern "C" fn erank_set_data(set: *const ErankEmbeddingSet, out_data: *mut *const f32) -> ErankStatus {
    guard(|| {
        let s = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        *out(out_data, "out_data")? = s.data().as_ptr();
        Ok(())
    })
}

/// Effective rank of all vectors in the set.
///
/// # Safety
/// `set` must come from [`erank_store_get`].
#[no_mangle]
pub unsafe extern "C" fn erank_set_effective_rank(set: *const ErankEmbeddingSet, out_rank: *mut f64) -> ErankStatus {
    guard(|| {
        let s = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        *out(out_rank, "out_rank")? = effective_rank(&singular_spectrum(&build_matrix(s))?)?.effective_rank;
        Ok(())
    })
}

/// Eigenscore of all vectors in the set.
///
/// # Safety
/// `set` must come from [`erank_store_get`].
#[no_mangle]
pub unsafe extern "C" fn erank_set_eigenscore(set: *const ErankEmbeddingSet, alpha: f64, out_score: *mut f64) -> ErankStatus {
    guard(|| {
        let s = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        *out(out_score, "out_score")? = eigenscore(&build_matrix(s), alpha)?.score;
        Ok(())
    })
}

/// Releases a set. NULL is ignored.
///
/// # Safety
/// `set` must come from [`erank_store_get`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn erank_set_free(set: *mut ErankEmbeddingSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}
