//! C ABI over `pointdr`.
//!
//! Clouds and models are opaque handles owned by the caller and released
//! with the matching `*_free`. Every fallible call returns a [`PdrStatus`];
//! on failure [`pdr_last_error`] describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pointdr::augment::{strong_view, weak_view, AugmentConfig};
use pointdr::bank::MemoryBank;
use pointdr::checkpoint;
use pointdr::io::{read_labeled_scan, read_scan};
use pointdr::labels::LabelMap;
use pointdr::loss::contrastive_loss;
use pointdr::matrix::Mat;
use pointdr::model::Model;
use pointdr::voxel::featurize_cloud;
use pointdr::weather::{corrupt, WeatherConfig};
use pointdr::{Error, Point, PointCloud, Weather};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdrStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    Argument = 4,
    Numeric = 5,
    State = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdrWeather {
    DenseFog = 0,
    LightFog = 1,
    Rain = 2,
    Snow = 3,
}

impl PdrWeather {
    fn from_raw(v: u32) -> Option<Weather> {
        Some(match v {
            0 => Weather::DenseFog,
            1 => Weather::LightFog,
            2 => Weather::Rain,
            3 => Weather::Snow,
            _ => return None,
        })
    }
}

/// Opaque point cloud.
pub struct PdrCloud(PointCloud);

/// Opaque trained model.
pub struct PdrModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(PdrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => PdrStatus::Io,
            Error::Format(_) => PdrStatus::Format,
            Error::Argument(_) => PdrStatus::Argument,
            Error::Numeric { .. } => PdrStatus::Numeric,
            Error::State(_) => PdrStatus::State,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PdrStatus::NullPointer, format!("`{what}` is null"))
}

fn arg(msg: impl Into<String>) -> Failure {
    Failure(PdrStatus::Argument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PdrStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| arg(format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn cloud_ref<'a>(c: *const PdrCloud) -> Result<&'a PointCloud, Failure> {
    c.as_ref().map(|c| &c.0).ok_or_else(|| null("cloud"))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Reads a `.bin` scan and, if `label_path` is non-null, its `.label` file
/// under the SemanticKITTI label map.
///
/// # Safety
/// `scan_path` and `label_path` must be null or NUL-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_read(
    scan_path: *const c_char,
    label_path: *const c_char,
    out: *mut *mut PdrCloud,
) -> PdrStatus {
    guard(|| {
        let scan = path_arg(scan_path, "scan_path")?;
        let cloud = if label_path.is_null() {
            read_scan(&scan)?
        } else {
            read_labeled_scan(&scan, path_arg(label_path, "label_path")?, &LabelMap::semantic_kitti())?
        };
        emit(out, PdrCloud(cloud))
    })
}

/// Builds a cloud from `n` interleaved `x, y, z, intensity` records and
/// optional train-ids.
///
/// # Safety
/// `xyzi` must hold `4 * n` floats; `labels` must be null or hold `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_from_arrays(
    xyzi: *const f32,
    n: usize,
    labels: *const u8,
    out: *mut *mut PdrCloud,
) -> PdrStatus {
    guard(|| {
        if xyzi.is_null() && n > 0 {
            return Err(null("xyzi"));
        }
        let raw = if n == 0 { &[][..] } else { std::slice::from_raw_parts(xyzi, 4 * n) };
        let points = raw.chunks_exact(4).map(|p| Point::new(p[0], p[1], p[2], p[3])).collect();
        let labels = (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, n).to_vec());
        emit(out, PdrCloud(PointCloud::new(points, labels)?))
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_len(cloud: *const PdrCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Whether the cloud carries labels.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_has_labels(cloud: *const PdrCloud) -> bool {
    cloud.as_ref().is_some_and(|c| c.0.labels().is_some())
}

/// Copies points as interleaved `x, y, z, intensity` into `out`, which holds
/// `capacity` points.
///
/// # Safety
/// `out` must be writable for `4 * capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_copy_points(cloud: *const PdrCloud, out: *mut f32, capacity: usize) -> PdrStatus {
    guard(|| {
        let c = cloud_ref(cloud)?;
        if capacity < c.len() {
            return Err(arg(format!("capacity {capacity} < {} points", c.len())));
        }
        if c.is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, 4 * c.len());
        for (d, p) in dst.chunks_exact_mut(4).zip(c.points()) {
            d.copy_from_slice(&[p.x, p.y, p.z, p.intensity]);
        }
        Ok(())
    })
}

/// Copies train-ids into `out`, which holds `capacity` bytes.
///
/// # Safety
/// `out` must be writable for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_copy_labels(cloud: *const PdrCloud, out: *mut u8, capacity: usize) -> PdrStatus {
    guard(|| {
        let c = cloud_ref(cloud)?;
        let labels = c.labels().ok_or_else(|| arg("cloud has no labels"))?;
        if capacity < labels.len() {
            return Err(arg(format!("capacity {capacity} < {} labels", labels.len())));
        }
        if labels.is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, labels.len()).copy_from_slice(labels);
        Ok(())
    })
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdr_cloud_free(cloud: *mut PdrCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Weak view (rotation and scaling) with default settings.
///
/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdr_augment_weak(cloud: *const PdrCloud, seed: u64, out: *mut *mut PdrCloud) -> PdrStatus {
    guard(|| {
        let v = weak_view(cloud_ref(cloud)?, &AugmentConfig::default(), seed)?;
        emit(out, PdrCloud(v))
    })
}

/// Strong view with default settings. Noise points are labeled ignored.
///
/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdr_augment_strong(cloud: *const PdrCloud, seed: u64, out: *mut *mut PdrCloud) -> PdrStatus {
    guard(|| {
        let v = strong_view(cloud_ref(cloud)?, &AugmentConfig::default(), seed)?;
        emit(out, PdrCloud(v.cloud))
    })
}

/// Applies a weather preset to a labeled cloud. `mode` is a [`PdrWeather`]
/// value.
///
/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdr_weather_corrupt(
    cloud: *const PdrCloud,
    mode: u32,
    seed: u64,
    out: *mut *mut PdrCloud,
) -> PdrStatus {
    guard(|| {
        let w = PdrWeather::from_raw(mode).ok_or_else(|| arg(format!("unknown weather mode {mode}")))?;
        let c = corrupt(cloud_ref(cloud)?, &WeatherConfig::preset(w), seed)?;
        emit(out, PdrCloud(c.with_weather(w)))
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdr_model_load(path: *const c_char, out: *mut *mut PdrModel) -> PdrStatus {
    guard(|| {
        let ck = checkpoint::load(path_arg(path, "path")?)?;
        emit(out, PdrModel(ck.model))
    })
}

/// Number of classes the model predicts, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdr_model_num_classes(model: *const PdrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config().num_classes)
}

/// Predicts one train-id per point into `out`, which holds `capacity` bytes.
///
/// # Safety
/// `model` and `cloud` must be live handles; `out` must be writable for
/// `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdr_model_predict(
    model: *const PdrModel,
    cloud: *const PdrCloud,
    out: *mut u8,
    capacity: usize,
) -> PdrStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let c = cloud_ref(cloud)?;
        if capacity < c.len() {
            return Err(arg(format!("capacity {capacity} < {} points", c.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let preds = m.predict(&featurize_cloud(c, m.config().voxel_size)?)?;
        std::slice::from_raw_parts_mut(out, preds.len()).copy_from_slice(&preds);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdr_model_free(model: *mut PdrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Prototype contrastive loss of `n × d` row-major embeddings against `c × d`
/// prototypes. `initialized` (nullable, `c` bytes) marks usable prototypes;
/// null means all. `grad` (nullable, `n × d`) receives the gradient wrt the
/// embeddings.
///
/// # Safety
/// Every non-null pointer must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn pdr_contrastive_loss(
    embeddings: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
    prototypes: *const f64,
    initialized: *const u8,
    c: usize,
    temperature: f64,
    loss: *mut f64,
    grad: *mut f64,
) -> PdrStatus {
    guard(|| {
        if loss.is_null() {
            return Err(null("loss"));
        }
        if d == 0 || c == 0 {
            return Err(arg("d and c must be positive"));
        }
        if (embeddings.is_null() || labels.is_null()) && n > 0 {
            return Err(null("embeddings"));
        }
        if prototypes.is_null() {
            return Err(null("prototypes"));
        }
        let slice = |p: *const f64, len: usize| if len == 0 { Vec::new() } else { std::slice::from_raw_parts(p, len).to_vec() };
        let f = Mat::from_vec(n, d, slice(embeddings, n * d));
        let y = if n == 0 { &[][..] } else { std::slice::from_raw_parts(labels, n) };
        let protos = Mat::from_vec(c, d, slice(prototypes, c * d));
        let init = if initialized.is_null() {
            vec![true; c]
        } else {
            std::slice::from_raw_parts(initialized, c).iter().map(|&b| b != 0).collect()
        };
        let bank = MemoryBank::from_parts(protos, 0.0, init)?;
        let out = contrastive_loss(&f, y, &bank, temperature)?;
        *loss = out.loss;
        if !grad.is_null() && n > 0 {
            std::slice::from_raw_parts_mut(grad, n * d).copy_from_slice(out.grad.as_slice());
        }
        Ok(())
    })
}
