//! C ABI over the glyphspot spotter.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! constructor (`gs_model_load`, `gs_image_from_gray8`, `gs_spot`, ...) and
//! released by the matching `gs_*_free`.
//! Fallible calls return a [`GsStatus`]; on failure a human-readable message
//! is kept per thread and can be read with [`gs_last_error`].
//!
//! The generated header lives at `include/glyphspot.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use glyphspot::pipeline::{self, ClassifierModel, SpotConfig, SpotReport};
use glyphspot::raster::{self, GrayImage};
use glyphspot::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    ImageFormat = 4,
    ModelFormat = 5,
    Checksum = 6,
    Version = 7,
    Dimension = 8,
    OutOfRange = 9,
    Internal = 10,
}

/// A box on the page in pixels plus the character probability.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub score: f64,
}

/// A loaded classifier.
pub struct GsModel {
    model: ClassifierModel,
    id: CString,
}

/// A grayscale page, intensities in [0, 1].
pub struct GsImage {
    image: GrayImage,
}

/// Outcome of spotting one page.
pub struct GsReport {
    report: SpotReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GsStatus {
    match err {
        Error::Io { .. } => GsStatus::Io,
        Error::Format(_) | Error::DegenerateImage => GsStatus::ImageFormat,
        Error::ModelFormat(_) => GsStatus::ModelFormat,
        Error::Checksum { .. } => GsStatus::Checksum,
        Error::Version(_) => GsStatus::Version,
        Error::Dimension(_)
        | Error::DimensionMismatch { .. }
        | Error::ShapeMismatch(_)
        | Error::ModelFeatureMismatch(_)
        | Error::BoxOutOfBounds { .. } => GsStatus::Dimension,
        _ => GsStatus::Internal,
    }
}

struct Fail(GsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, translating errors and panics into a status plus the thread's
/// last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GsStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, Fail> {
    let out = p.as_mut().ok_or_else(|| null(what))?;
    *out = ptr::null_mut();
    Ok(out)
}

fn to_box(b: &pipeline::ScoredBox) -> GsBox {
    GsBox {
        x: b.bbox.x as u32,
        y: b.bbox.y as u32,
        width: b.bbox.w as u32,
        height: b.bbox.h as u32,
        score: b.score,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by `glyphspot train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_model_load(path: *const c_char, out: *mut *mut GsModel) -> GsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = boxed_model(pipeline::load_model(path)?)?;
        Ok(())
    })
}

/// Parses a model from an in-memory copy of a model file.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gs_model_from_bytes(data: *const u8, len: usize, out: *mut *mut GsModel) -> GsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        *out = boxed_model(pipeline::model_from_bytes(bytes)?)?;
        Ok(())
    })
}

fn boxed_model(model: ClassifierModel) -> Result<*mut GsModel, Fail> {
    model.validate()?;
    let id = CString::new(pipeline::model_id(&model)).expect("model id has no NUL");
    Ok(Box::into_raw(Box::new(GsModel { model, id })))
}

/// Stable identifier of the model, e.g. `knn-1a2b3c4d`. Owned by the model.
///
/// # Safety
/// `model` must be null or a live pointer from `gs_model_load`.
#[no_mangle]
pub unsafe extern "C" fn gs_model_id(model: *const GsModel) -> *const c_char {
    model.as_ref().map_or(ptr::null(), |m| m.id.as_ptr())
}

/// # Safety
/// `model` must be null or a pointer from `gs_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_model_free(model: *mut GsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Decodes a PNG or PGM page from disk.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_image_load(path: *const c_char, out: *mut *mut GsImage) -> GsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let image = raster::load_image(path)?;
        *out = Box::into_raw(Box::new(GsImage { image }));
        Ok(())
    })
}

/// Copies a row-major 8-bit grayscale buffer (0 black, 255 white). Both
/// dimensions must be nonzero.
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gs_image_from_gray8(
    pixels: *const u8,
    width: u32,
    height: u32,
    out: *mut *mut GsImage,
) -> GsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let (w, h) = (width as usize, height as usize);
        if w == 0 || h == 0 {
            return Err(Fail(GsStatus::InvalidArgument, format!("empty image {w}x{h}")));
        }
        let n = w
            .checked_mul(h)
            .ok_or_else(|| Fail(GsStatus::InvalidArgument, "image too large".into()))?;
        let bytes = std::slice::from_raw_parts(pixels, n);
        let image = GrayImage::from_u8(w, h, bytes)?;
        *out = Box::into_raw(Box::new(GsImage { image }));
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a pointer from `gs_image_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_image_free(image: *mut GsImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Segments `image`, classifies every region with `model` and returns the
/// accepted and rejected boxes. `page_id` may be null, meaning `"page"`.
/// Segmentation uses the default gap threshold and minimum area.
///
/// # Safety
/// `model` and `image` must be live handles, `page_id` null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_spot(
    model: *const GsModel,
    image: *const GsImage,
    page_id: *const c_char,
    out: *mut *mut GsReport,
) -> GsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let image = image.as_ref().ok_or_else(|| null("image"))?;
        let page_id = if page_id.is_null() {
            "page"
        } else {
            str_arg(page_id, "page_id")?
        };
        let id = model.id.to_str().expect("ascii id");
        let report = pipeline::spot(&image.image, page_id, &model.model, id, &SpotConfig::default())?;
        let json = serde_json::to_string(&report).map_err(|e| Fail(GsStatus::Internal, e.to_string()))?;
        let json = CString::new(json).expect("json has no NUL");
        *out = Box::into_raw(Box::new(GsReport { report, json }));
        Ok(())
    })
}

/// Number of regions classified as characters; 0 for a null report.
///
/// # Safety
/// `report` must be null or a live pointer from `gs_spot`.
#[no_mangle]
pub unsafe extern "C" fn gs_report_accepted_count(report: *const GsReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.accepted.len())
}

/// Number of regions classified as rejects; 0 for a null report.
///
/// # Safety
/// `report` must be null or a live pointer from `gs_spot`.
#[no_mangle]
pub unsafe extern "C" fn gs_report_rejected_count(report: *const GsReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.rejected.len())
}

/// Writes accepted box `index` (reading order) to `out`.
///
/// # Safety
/// `report` must be a live pointer from `gs_spot` and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_report_accepted(report: *const GsReport, index: usize, out: *mut GsBox) -> GsStatus {
    report_box(report, index, out, |r| &r.accepted)
}

/// Writes rejected box `index` (reading order) to `out`.
///
/// # Safety
/// `report` must be a live pointer from `gs_spot` and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_report_rejected(report: *const GsReport, index: usize, out: *mut GsBox) -> GsStatus {
    report_box(report, index, out, |r| &r.rejected)
}

unsafe fn report_box(
    report: *const GsReport,
    index: usize,
    out: *mut GsBox,
    pick: fn(&SpotReport) -> &Vec<pipeline::ScoredBox>,
) -> GsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let boxes = pick(&report.report);
        let b = boxes.get(index).ok_or_else(|| {
            Fail(
                GsStatus::OutOfRange,
                format!("index {index} out of range for {} boxes", boxes.len()),
            )
        })?;
        *out = to_box(b);
        Ok(())
    })
}

/// The full report as one JSON object, same layout as `glyphspot spot`.
/// Owned by the report.
///
/// # Safety
/// `report` must be null or a live pointer from `gs_spot`.
#[no_mangle]
pub unsafe extern "C" fn gs_report_json(report: *const GsReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must be null or a pointer from `gs_spot` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_report_free(report: *mut GsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
