//! C ABI over the geostack core.
//!
//! Objects cross the boundary as opaque handles created by `gs_*_new`,
//! `gs_*_load` or `gs_*_fit` and released with the matching `gs_*_free`.
//! Every fallible function returns a [`GsStatus`]; on failure the message is
//! available from [`gs_last_error`] on the same thread until the next call.
//! Strings are NUL-terminated UTF-8. Panics never unwind into C: they are
//! caught and reported as [`GsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use geostack::corpus::{load_corpus, parse_corpus};
use geostack::ensemble::{predict_stacking, PredictionSet, StackingModel};
use geostack::geo_metrics::{evaluate, haversine_km};
use geostack::nu_svr::{FittedStringSvr, StringKernelSvr, SvrParams};
use geostack::string_kernel::{cross_matrix, gram_matrix, KernelMatrix, NGramRange};
use geostack::{Corpus, CorpusRole, GeoError, GeoPoint, PerCoordinate};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    DimensionMismatch = 4,
    FingerprintMismatch = 5,
    Io = 6,
    Panic = 7,
}

/// Role a corpus plays; decides whether coordinates are required.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsRole {
    Train = 0,
    Dev = 1,
    Test = 2,
}

impl From<GsRole> for CorpusRole {
    fn from(r: GsRole) -> Self {
        match r {
            GsRole::Train => CorpusRole::Train,
            GsRole::Dev => CorpusRole::Dev,
            GsRole::Test => CorpusRole::Test,
        }
    }
}

pub struct GsCorpus(Corpus);
pub struct GsKernel(KernelMatrix);
/// A fitted string-kernel ν-SVR pair (latitude and longitude).
pub struct GsSvr(FittedStringSvr);
pub struct GsStacking(StackingModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &GeoError) -> GsStatus {
    match err {
        GeoError::InvalidArgument(_) => GsStatus::InvalidArgument,
        GeoError::DimensionMismatch(_) => GsStatus::DimensionMismatch,
        GeoError::FingerprintMismatch { .. } => GsStatus::FingerprintMismatch,
        GeoError::Io(_) => GsStatus::Io,
        GeoError::File { source, .. }
        | GeoError::Fold { source, .. }
        | GeoError::GridCell { source, .. } => status_of(source),
        _ => GsStatus::InvalidData,
    }
}

enum Failure {
    Null(&'static str),
    Geo(GeoError),
}

impl From<GeoError> for Failure {
    fn from(e: GeoError) -> Self {
        Failure::Geo(e)
    }
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GsStatus::NullPointer
        }
        Ok(Err(Failure::Geo(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            GsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| GeoError::InvalidArgument(format!("{what} is not valid UTF-8")).into())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes `values` into a caller buffer of `len` doubles.
unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    if len != values.len() {
        return Err(GeoError::DimensionMismatch(format!(
            "buffer holds {len} values, {} needed",
            values.len()
        ))
        .into());
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

fn range(min_n: usize, max_n: usize) -> Result<NGramRange, Failure> {
    Ok(NGramRange::new(min_n, max_n)?)
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next `gs_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Great-circle distance in kilometres between two points in degrees.
///
/// # Safety
/// `out_km` must be NULL or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn gs_haversine_km(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out_km: *mut f64,
) -> GsStatus {
    guard(|| {
        let a = GeoPoint::new(lat1, lon1)?;
        let b = GeoPoint::new(lat2, lon2)?;
        fill(out_km, 1, &[haversine_km(&a, &b)])
    })
}

/// Parses corpus text (`lat<TAB>lon<TAB>text` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_corpus_parse(
    text: *const c_char,
    role: GsRole,
    out: *mut *mut GsCorpus,
) -> GsStatus {
    guard(|| {
        let corpus = parse_corpus(self::text(text, "text")?, role.into())?;
        put(out, GsCorpus(corpus))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_corpus_load(
    path: *const c_char,
    role: GsRole,
    out: *mut *mut GsCorpus,
) -> GsStatus {
    guard(|| {
        let corpus = load_corpus(text(path, "path")?, role.into())?;
        put(out, GsCorpus(corpus))
    })
}

/// Number of posts, or 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_corpus_len(corpus: *const GsCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_corpus_free(corpus: *mut GsCorpus) {
    free(corpus)
}

/// Gram matrix of `corpus` with itself.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_gram(
    corpus: *const GsCorpus,
    min_n: usize,
    max_n: usize,
    normalize: bool,
    out: *mut *mut GsKernel,
) -> GsStatus {
    guard(|| {
        let c = deref(corpus, "corpus")?;
        put(out, GsKernel(gram_matrix(&c.0, range(min_n, max_n)?, normalize)?))
    })
}

/// Cross matrix with one row per `test` post and one column per `train` post.
///
/// # Safety
/// `test` and `train` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_cross(
    test: *const GsCorpus,
    train: *const GsCorpus,
    min_n: usize,
    max_n: usize,
    normalize: bool,
    out: *mut *mut GsKernel,
) -> GsStatus {
    guard(|| {
        let (t, tr) = (deref(test, "test")?, deref(train, "train")?);
        let k = cross_matrix(&t.0, &tr.0, range(min_n, max_n)?, normalize)?;
        put(out, GsKernel(k))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_load(path: *const c_char, out: *mut *mut GsKernel) -> GsStatus {
    guard(|| put(out, GsKernel(KernelMatrix::load(text(path, "path")?)?)))
}

/// # Safety
/// `kernel` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_save(kernel: *const GsKernel, path: *const c_char) -> GsStatus {
    guard(|| Ok(deref(kernel, "kernel")?.0.save(text(path, "path")?)?))
}

/// # Safety
/// `kernel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_rows(kernel: *const GsKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.0.rows())
}

/// # Safety
/// `kernel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_cols(kernel: *const GsKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.0.cols())
}

/// Copies the row-major values into `out`, which must hold `rows * cols`
/// doubles.
///
/// # Safety
/// `kernel` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_values(
    kernel: *const GsKernel,
    out: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| fill(out, len, deref(kernel, "kernel")?.0.values()))
}

/// # Safety
/// `kernel` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_kernel_free(kernel: *mut GsKernel) {
    free(kernel)
}

/// Fits one ν-SVR per coordinate on a labeled corpus.
///
/// # Safety
/// `train` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_svr_fit(
    train: *const GsCorpus,
    min_n: usize,
    max_n: usize,
    normalize: bool,
    c: f64,
    nu: f64,
    out: *mut *mut GsSvr,
) -> GsStatus {
    guard(|| {
        let params = SvrParams::new(c, nu);
        let model = StringKernelSvr {
            range: range(min_n, max_n)?,
            normalize,
            params: PerCoordinate {
                lat: params,
                lon: params,
            },
        };
        put(out, GsSvr(model.fit(&deref(train, "train")?.0)?))
    })
}

/// Whether both coordinate models met the KKT tolerance.
///
/// # Safety
/// `svr` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_svr_converged(svr: *const GsSvr) -> bool {
    svr.as_ref().is_some_and(|s| s.0.converged())
}

/// Predicts every post of `corpus` into `out_lat` and `out_lon`, each of
/// `len == gs_corpus_len(corpus)` doubles.
///
/// # Safety
/// Handles must be live; both buffers must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_svr_predict(
    svr: *const GsSvr,
    corpus: *const GsCorpus,
    out_lat: *mut f64,
    out_lon: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let points = deref(svr, "svr")?.0.predict(&deref(corpus, "corpus")?.0)?;
        let lat: Vec<f64> = points.iter().map(GeoPoint::lat).collect();
        let lon: Vec<f64> = points.iter().map(GeoPoint::lon).collect();
        fill(out_lat, len, &lat)?;
        fill(out_lon, len, &lon)
    })
}

/// # Safety
/// `svr` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_svr_free(svr: *mut GsSvr) {
    free(svr)
}

/// Loads a stacking model written by `geostack ensemble train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_stacking_load(
    path: *const c_char,
    out: *mut *mut GsStacking,
) -> GsStatus {
    guard(|| {
        let path = PathBuf::from(text(path, "path")?);
        let body = std::fs::read_to_string(&path).map_err(GeoError::from)?;
        put(out, GsStacking(StackingModel::from_text(&body)?))
    })
}

/// Number of base models the booster was trained on.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_stacking_base_models(model: *const GsStacking) -> usize {
    model.as_ref().map_or(0, |m| m.0.base_models().len())
}

/// Combines base-model prediction files (one per base model, any order) into
/// ensemble coordinates for every post of `corpus`.
///
/// # Safety
/// Handles must be live; `pred_paths` must hold `n_paths` NUL-terminated
/// strings; both buffers must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_stacking_predict(
    model: *const GsStacking,
    corpus: *const GsCorpus,
    pred_paths: *const *const c_char,
    n_paths: usize,
    out_lat: *mut f64,
    out_lon: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let corpus = deref(corpus, "corpus")?;
        if pred_paths.is_null() && n_paths > 0 {
            return Err(Failure::Null("pred_paths"));
        }
        let mut sets = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            sets.push(PredictionSet::load(text(*pred_paths.add(i), "prediction path")?)?);
        }
        let set = predict_stacking(&model.0, &sets, &corpus.0)?;
        let (lat, lon): (Vec<f64>, Vec<f64>) =
            set.entries().iter().map(|(_, p)| (p.lat(), p.lon())).unzip();
        fill(out_lat, len, &lat)?;
        fill(out_lon, len, &lon)
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_stacking_free(model: *mut GsStacking) {
    free(model)
}

/// Median great-circle error in km of predicted coordinates against the
/// labels of `truth`, with predictions given in corpus order.
///
/// # Safety
/// `truth` must be a live handle; `lat` and `lon` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_median_error_km(
    truth: *const GsCorpus,
    lat: *const f64,
    lon: *const f64,
    len: usize,
    out_km: *mut f64,
) -> GsStatus {
    guard(|| {
        let truth = &deref(truth, "truth")?.0;
        if lat.is_null() || lon.is_null() {
            return Err(Failure::Null("coordinates"));
        }
        let (lat, lon) = (
            std::slice::from_raw_parts(lat, len),
            std::slice::from_raw_parts(lon, len),
        );
        let points = lat
            .iter()
            .zip(lon)
            .map(|(a, b)| GeoPoint::new(*a, *b))
            .collect::<Result<Vec<_>, _>>()?;
        let set = PredictionSet::from_points("ffi", &truth.ids(), points)?;
        fill(out_km, 1, &[evaluate(&set, truth)?.median_km])
    })
}
