//! C ABI over the `freebreath` library.
//!
//! Objects cross the boundary as opaque handles created by `fb_*_new`/`fb_*_read`
//! style constructors and released with the matching `fb_*_free`. Every fallible
//! call returns an [`FbStatus`]; the message of the last failure on the calling
//! thread is available from [`fb_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use freebreath::io::{read_image, write_image, PipelineConfig};
use freebreath::metrics::{psnr, ssim};
use freebreath::pipeline::{run_pipeline, PipelineSummary};
use freebreath::{Error, Image, C64};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    InvalidConfig = 4,
    Divergence = 5,
    Format = 6,
    Io = 7,
    Panic = 8,
}

/// Complex image, row-major.
pub struct FbImage(Image);

/// Pipeline configuration.
pub struct FbConfig(PipelineConfig);

/// Summary of a finished pipeline run.
pub struct FbSummary(PipelineSummary);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> FbStatus {
    match err {
        Error::Stage { source, .. } => status_of(source),
        Error::ShapeMismatch(_) => FbStatus::ShapeMismatch,
        Error::InvalidArgument(_) => FbStatus::InvalidArgument,
        Error::InvalidConfig(_) => FbStatus::InvalidConfig,
        Error::Divergence(_) => FbStatus::Divergence,
        Error::UnsupportedVersion(_)
        | Error::TruncatedPayload { .. }
        | Error::DimensionMismatch(_)
        | Error::MalformedHeader(_)
        | Error::Json(_) => FbStatus::Format,
        Error::Io(_) | Error::Png(_) => FbStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FbStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FbStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside freebreath".into());
            FbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn text(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `src` plus a terminating NUL into `buf` when it fits and returns the
/// number of bytes needed including the NUL.
unsafe fn copy_text(src: &str, buf: *mut c_char, len: usize) -> usize {
    let bytes = src.as_bytes();
    if !buf.is_null() && len > bytes.len() {
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    bytes.len() + 1
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated
/// when `len` is large enough) and returns the size needed including the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fb_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_text(&e.borrow(), buf, len))
}

/// Builds an image from `2 * nx * ny` interleaved (re, im) doubles.
///
/// # Safety
/// `data` must point to `2 * nx * ny` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_image_new(
    nx: usize,
    ny: usize,
    data: *const f64,
    out: *mut *mut FbImage,
) -> FbStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let n = nx
            .checked_mul(ny)
            .ok_or_else(|| Error::InvalidArgument("image too large".into()))?;
        let raw = std::slice::from_raw_parts(data, 2 * n);
        let values = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        put(out, FbImage(Image::from_vec(nx, ny, values)?))
    })
}

/// Reads an image dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_image_read(path: *const c_char, out: *mut *mut FbImage) -> FbStatus {
    guard(|| {
        let p = PathBuf::from(text(path, "path")?);
        put(out, FbImage(read_image(&p)?))
    })
}

/// Writes an image dataset file.
///
/// # Safety
/// `img` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fb_image_write(img: *const FbImage, path: *const c_char) -> FbStatus {
    guard(|| {
        let img = deref(img, "image")?;
        let p = PathBuf::from(text(path, "path")?);
        write_image(&p, &img.0, &serde_json::json!({"writer": "freebreath-ffi"}))?;
        Ok(())
    })
}

/// # Safety
/// `img` must be a live handle; `nx` and `ny` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fb_image_dims(
    img: *const FbImage,
    nx: *mut usize,
    ny: *mut usize,
) -> FbStatus {
    guard(|| {
        let img = deref(img, "image")?;
        if nx.is_null() || ny.is_null() {
            return Err(Failure::Null("dims"));
        }
        (*nx, *ny) = img.0.dims();
        Ok(())
    })
}

/// Copies the pixels as interleaved (re, im) doubles; `len` counts doubles
/// and must be at least `2 * nx * ny`.
///
/// # Safety
/// `img` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fb_image_copy_data(
    img: *const FbImage,
    out: *mut f64,
    len: usize,
) -> FbStatus {
    guard(|| {
        let img = deref(img, "image")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let need = 2 * img.0.len();
        if len < need {
            return Err(
                Error::InvalidArgument(format!("buffer of {len} doubles, need {need}")).into(),
            );
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (d, v) in dst.chunks_exact_mut(2).zip(img.0.data()) {
            d[0] = v.re;
            d[1] = v.im;
        }
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fb_image_free(img: *mut FbImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// PSNR in dB of `test` against `reference`.
///
/// # Safety
/// Both handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_psnr(
    test: *const FbImage,
    reference: *const FbImage,
    out: *mut f64,
) -> FbStatus {
    guard(|| {
        let v = psnr(&deref(test, "test")?.0, &deref(reference, "reference")?.0)?;
        *(out.as_mut().ok_or(Failure::Null("out"))?) = v;
        Ok(())
    })
}

/// SSIM of the magnitudes of `test` and `reference`.
///
/// # Safety
/// Both handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_ssim(
    test: *const FbImage,
    reference: *const FbImage,
    out: *mut f64,
) -> FbStatus {
    guard(|| {
        let v = ssim(&deref(test, "test")?.0, &deref(reference, "reference")?.0)?;
        *(out.as_mut().ok_or(Failure::Null("out"))?) = v;
        Ok(())
    })
}

/// Default pipeline configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_config_default(out: *mut *mut FbConfig) -> FbStatus {
    guard(|| put(out, FbConfig(PipelineConfig::default())))
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_config_from_json(
    json: *const c_char,
    out: *mut *mut FbConfig,
) -> FbStatus {
    guard(|| {
        let cfg = PipelineConfig::from_json(&text(json, "json")?)?;
        put(out, FbConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fb_config_set_seed(cfg: *mut FbConfig, seed: u64) -> FbStatus {
    guard(|| {
        cfg.as_mut().ok_or(Failure::Null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fb_config_set_output_dir(
    cfg: *mut FbConfig,
    dir: *const c_char,
) -> FbStatus {
    guard(|| {
        let d = text(dir, "dir")?;
        cfg.as_mut().ok_or(Failure::Null("config"))?.0.output_dir = PathBuf::from(d);
        Ok(())
    })
}

/// Serializes the configuration as JSON; returns the size needed including the NUL.
///
/// # Safety
/// `cfg` must be a live handle; `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fb_config_to_json(
    cfg: *const FbConfig,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match cfg.as_ref().map(|c| serde_json::to_string(&c.0)) {
        Some(Ok(s)) => copy_text(&s, buf, len),
        _ => 0,
    }
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fb_config_free(cfg: *mut FbConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the full pipeline; artifacts land in the configured output directory.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_pipeline_run(
    cfg: *const FbConfig,
    out: *mut *mut FbSummary,
) -> FbStatus {
    guard(|| {
        let summary = run_pipeline(&deref(cfg, "config")?.0)?;
        put(out, FbSummary(summary))
    })
}

/// PSNR and SSIM of one method (`mocobel`, `tikhonov`, `rra`, `sos`, `zero_filled`).
///
/// # Safety
/// `summary` must be a live handle, `method` a NUL-terminated string and the
/// outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fb_summary_score(
    summary: *const FbSummary,
    method: *const c_char,
    psnr_db: *mut f64,
    ssim: *mut f64,
) -> FbStatus {
    guard(|| {
        let s = deref(summary, "summary")?;
        let m = text(method, "method")?;
        let score =
            s.0.scores
                .get(&m)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{m}`")))?;
        *(psnr_db.as_mut().ok_or(Failure::Null("psnr_db"))?) = score.psnr_db;
        *(ssim.as_mut().ok_or(Failure::Null("ssim"))?) = score.ssim;
        Ok(())
    })
}

/// Serializes the summary as JSON; returns the size needed including the NUL.
///
/// # Safety
/// `summary` must be a live handle; `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fb_summary_to_json(
    summary: *const FbSummary,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match summary.as_ref().map(|s| serde_json::to_string(&s.0)) {
        Some(Ok(s)) => copy_text(&s, buf, len),
        _ => 0,
    }
}

/// # Safety
/// `summary` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fb_summary_free(summary: *mut FbSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}
