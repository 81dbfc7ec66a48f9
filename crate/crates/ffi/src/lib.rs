//! C interface to ambidoa.
//!
//! Every function returns an [`AdoaStatus`]; on failure a message is kept
//! per thread and read with [`ambidoa_last_error`]. Angles are in radians.
//! Objects are opaque handles released with their `_free` function.
//! Multichannel buffers are planar: channel 0 (W) samples, then X, Y, Z.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ambidoa::ambisonics::{foa_gains, Foa};
use ambidoa::dsp::{intensity_features, stft, FeatureTensor, StftConfig};
use ambidoa::music::music_estimate;
use ambidoa::nn::{decode, load_model, Network};
use ambidoa::sphere::{Direction, SphereGrid};
use ambidoa::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdoaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Ambiguous = 6,
    Runtime = 7,
    Panic = 8,
}

/// Sphere grid handle.
pub struct AdoaGrid {
    grid: SphereGrid,
}

/// Trained model handle.
pub struct AdoaModel {
    net: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> AdoaStatus {
    match err {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::SampleRate(..) => AdoaStatus::InvalidArgument,
        Error::Shape { .. } | Error::TooShort { .. } => AdoaStatus::Shape,
        Error::Io(_) => AdoaStatus::Io,
        Error::Format { .. } | Error::Json(_) | Error::Wav(_) => AdoaStatus::Format,
        Error::Ambiguous(_) => AdoaStatus::Ambiguous,
        _ => AdoaStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (AdoaStatus, String)>) -> AdoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            AdoaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AdoaStatus::Panic
        }
    }
}

fn lib(err: Error) -> (AdoaStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (AdoaStatus, String) {
    (AdoaStatus::NullPointer, format!("{name} is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ambidoa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ambidoa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Writes the four FOA gains (W, X, Y, Z) of a direction into `out`.
///
/// # Safety
/// `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_foa_gains(azimuth: f64, elevation: f64, out: *mut f64) -> AdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err((AdoaStatus::InvalidArgument, "angles must be finite".into()));
        }
        let g = foa_gains(&Direction::from_angles(azimuth, elevation));
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&g);
        Ok(())
    })
}

/// Builds a sphere grid with the given resolution in degrees.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_grid_new(resolution_deg: f64, out: *mut *mut AdoaGrid) -> AdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = SphereGrid::new(resolution_deg).map_err(lib)?;
        *out = Box::into_raw(Box::new(AdoaGrid { grid }));
        Ok(())
    })
}

/// Releases a grid; null is ignored.
///
/// # Safety
/// `grid` must come from [`ambidoa_grid_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_grid_free(grid: *mut AdoaGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_grid_len(grid: *const AdoaGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.len())
}

/// Center of class `index`.
///
/// # Safety
/// `grid` must be a live handle; `azimuth` and `elevation` writable.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_grid_center(
    grid: *const AdoaGrid,
    index: usize,
    azimuth: *mut f64,
    elevation: *mut f64,
) -> AdoaStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        if azimuth.is_null() || elevation.is_null() {
            return Err(null("output"));
        }
        if index >= g.grid.len() {
            return Err((AdoaStatus::InvalidArgument, format!("class {index} outside 0..{}", g.grid.len())));
        }
        let (a, e) = g.grid.center(index).angles();
        *azimuth = a;
        *elevation = e;
        Ok(())
    })
}

/// Class nearest to a direction.
///
/// # Safety
/// `grid` must be a live handle; `index` writable.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_grid_nearest(
    grid: *const AdoaGrid,
    azimuth: f64,
    elevation: f64,
    index: *mut usize,
) -> AdoaStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        if index.is_null() {
            return Err(null("index"));
        }
        *index = g.grid.nearest_class(&Direction::from_angles(azimuth, elevation));
        Ok(())
    })
}

unsafe fn foa_from_planar(samples: *const f64, n_samples: usize, sample_rate: u32) -> Result<Foa, (AdoaStatus, String)> {
    if samples.is_null() {
        return Err(null("samples"));
    }
    let all = std::slice::from_raw_parts(samples, 4 * n_samples);
    let channels = std::array::from_fn(|c| all[c * n_samples..(c + 1) * n_samples].to_vec());
    Foa::new(channels, sample_rate).map_err(lib)
}

/// Intensity features of the first `frames` STFT frames of a planar FOA
/// buffer. `out` receives 6 × frames × (window/2 + 1) doubles, row-major.
///
/// # Safety
/// `samples` must hold `4 * n_samples` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_features(
    samples: *const f64,
    n_samples: usize,
    sample_rate: u32,
    window: usize,
    hop: usize,
    frames: usize,
    out: *mut f64,
    out_len: usize,
) -> AdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let foa = foa_from_planar(samples, n_samples, sample_rate)?;
        let cfg = StftConfig { window, hop };
        let need = 6 * frames * cfg.n_bins();
        if out_len != need {
            return Err((AdoaStatus::Shape, format!("output holds {out_len} values, need {need}")));
        }
        let feats = intensity_features(&stft(&foa, frames, cfg).map_err(lib)?);
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(feats.values());
        Ok(())
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_model_load(path: *const c_char, out: *mut *mut AdoaModel) -> AdoaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (AdoaStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let net = load_model(Path::new(p)).map_err(lib)?;
        *out = Box::into_raw(Box::new(AdoaModel { net }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`ambidoa_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_model_free(model: *mut AdoaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Frames and frequency bins the model expects, and its STFT window and hop.
///
/// # Safety
/// `model` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_model_input_shape(
    model: *const AdoaModel,
    frames: *mut usize,
    bins: *mut usize,
    window: *mut usize,
    hop: *mut usize,
) -> AdoaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if frames.is_null() || bins.is_null() || window.is_null() || hop.is_null() {
            return Err(null("output"));
        }
        let c = m.net.config();
        *frames = c.frames;
        *bins = c.freq_bins;
        *window = c.stft.window;
        *hop = c.stft.hop;
        Ok(())
    })
}

/// Direction estimate from a feature tensor of the model's input shape.
/// Safe to call from many threads on one model.
///
/// # Safety
/// `features` must hold `len` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_model_predict(
    model: *const AdoaModel,
    features: *const f64,
    len: usize,
    azimuth: *mut f64,
    elevation: *mut f64,
) -> AdoaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if features.is_null() || azimuth.is_null() || elevation.is_null() {
            return Err(null("argument"));
        }
        let c = m.net.config();
        let x = FeatureTensor::new(c.frames, c.freq_bins, std::slice::from_raw_parts(features, len).to_vec())
            .map_err(lib)?;
        let out = m.net.forward(&x).map_err(lib)?;
        let (a, e) = decode(m.net.formulation(), &out).map_err(lib)?.angles();
        *azimuth = a;
        *elevation = e;
        Ok(())
    })
}

/// MUSIC estimate over a planar FOA buffer, snapped to a grid class.
///
/// # Safety
/// `samples` must hold `4 * n_samples` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ambidoa_music_estimate(
    samples: *const f64,
    n_samples: usize,
    sample_rate: u32,
    grid: *const AdoaGrid,
    azimuth: *mut f64,
    elevation: *mut f64,
) -> AdoaStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        if azimuth.is_null() || elevation.is_null() {
            return Err(null("output"));
        }
        let foa = foa_from_planar(samples, n_samples, sample_rate)?;
        let (a, e) = music_estimate(&foa, &g.grid).map_err(lib)?.angles();
        *azimuth = a;
        *elevation = e;
        Ok(())
    })
}
