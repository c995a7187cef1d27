//! C ABI over `dwnet`: build, load, save and run models, read trajectory
//! files, and call the scalar metrics and the Pareto filter.
//!
//! Every fallible function returns a [`DwnetStatus`]. On failure the message
//! is kept per thread and read with [`dwnet_last_error_message`]. Handles are
//! opaque and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dwnet::arch::{Checkpoint, Family, Model, ModelConfig};
use dwnet::harness::pareto_indices;
use dwnet::metrics;
use dwnet::tensor::{PaddingMode, Shape, Tensor};
use dwnet::trainer::lr_schedule;
use dwnet::trajectory::Trajectory;
use dwnet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    NonFinite = 6,
    DegenerateReference = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Unsupported = 10,
}

/// A built or loaded model.
pub struct DwnetModel {
    inner: Model,
}

/// A trajectory read from a `DWTRJ1` file.
pub struct DwnetTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DwnetStatus {
    match e {
        Error::Shape { .. } => DwnetStatus::Shape,
        Error::Io(_) | Error::MissingFile(_) => DwnetStatus::Io,
        Error::Format { .. } | Error::Csv(_) => DwnetStatus::Format,
        Error::NonFinite(_) | Error::SolverBlowUp { .. } => DwnetStatus::NonFinite,
        Error::DegenerateReference(_) => DwnetStatus::DegenerateReference,
        Error::UnsupportedConfig(_) => DwnetStatus::Unsupported,
        _ => DwnetStatus::InvalidArgument,
    }
}

struct Fail(DwnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DwnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DwnetStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside dwnet".into());
            DwnetStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DwnetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(DwnetStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dwnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dwnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a model with freshly initialized parameters.
///
/// `family` is one of `unet_base`, `unet_mod`, `cnunet`, `unet_deep`,
/// `sinenet`, `dwnet`. `waves = 0` selects the family default.
///
/// # Safety
/// `family` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dwnet_model_build(
    family: *const c_char,
    width: u32,
    levels: u32,
    waves: u32,
    in_channels: u32,
    out_channels: u32,
    periodic: bool,
    seed: u64,
    out: *mut *mut DwnetModel,
) -> DwnetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if family.is_null() {
            return Err(null("family"));
        }
        let name = CStr::from_ptr(family).to_string_lossy();
        let family: Family = name.parse()?;
        let pad = if periodic { PaddingMode::Periodic } else { PaddingMode::Zero };
        let mut cfg = ModelConfig::new(family, width as usize, in_channels as usize, out_channels as usize)
            .with_levels(levels as usize)
            .with_padding(pad);
        if waves > 0 {
            cfg = cfg.with_waves(waves as usize);
        }
        let model = Model::build(cfg, seed)?;
        *out = Box::into_raw(Box::new(DwnetModel { inner: model }));
        Ok(())
    })
}

/// Load the model of a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_load(path: *const c_char, out: *mut *mut DwnetModel) -> DwnetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DwnetModel { inner: ck.model }));
        Ok(())
    })
}

/// Write the model as a checkpoint without optimizer state.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_save(model: *const DwnetModel, path: *const c_char) -> DwnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. NULL is
/// accepted.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_free(model: *mut DwnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_param_count(model: *const DwnetModel, out: *mut u64) -> DwnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.inner.param_count() as u64;
        Ok(())
    })
}

/// Input and output channel counts of a model.
///
/// # Safety
/// `model` must come from this library; `in_channels` and `out_channels`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_channels(
    model: *const DwnetModel,
    in_channels: *mut u32,
    out_channels: *mut u32,
) -> DwnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(in_channels, "in_channels")? = m.inner.config().in_channels as u32;
        *out_arg(out_channels, "out_channels")? = m.inner.config().out_channels as u32;
        Ok(())
    })
}

/// One forward pass on an `(n, in_channels, h, w)` row-major batch. Writes
/// `n * out_channels * h * w` values to `output`.
///
/// # Safety
/// `input` must hold `n * in_channels * h * w` floats and `output` must have
/// room for `output_len` floats.
#[no_mangle]
pub unsafe extern "C" fn dwnet_model_forward(
    model: *const DwnetModel,
    input: *const f32,
    n: u32,
    h: u32,
    w: u32,
    output: *mut f32,
    output_len: usize,
) -> DwnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let cfg = m.inner.config();
        let (n, h, w) = (n as usize, h as usize, w as usize);
        let shape = Shape::new(n, cfg.in_channels, h, w);
        let x = slice_arg(input, shape.numel(), "input")?;
        let need = n * cfg.out_channels * h * w;
        if output_len < need {
            return Err(Fail(DwnetStatus::BufferTooSmall, format!("output holds {output_len} values, need {need}")));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        let y = m.inner.predict(&Tensor::from_vec(shape, x.to_vec())?)?;
        std::slice::from_raw_parts_mut(output, need).copy_from_slice(y.data());
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_trajectory_load(path: *const c_char, out: *mut *mut DwnetTrajectory) -> DwnetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = Trajectory::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DwnetTrajectory { inner: t }));
        Ok(())
    })
}

/// Writes `[T, M, H, W]` to `dims`.
///
/// # Safety
/// `traj` must come from this library and `dims` hold four values.
#[no_mangle]
pub unsafe extern "C" fn dwnet_trajectory_dims(traj: *const DwnetTrajectory, dims: *mut u32) -> DwnetStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = std::slice::from_raw_parts_mut(dims, 4);
        for (o, v) in d.iter_mut().zip(t.inner.dims()) {
            *o = v as u32;
        }
        Ok(())
    })
}

/// Borrow the frame-major data. The pointer lives as long as the handle.
///
/// # Safety
/// `traj` must come from this library; `data` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_trajectory_data(
    traj: *const DwnetTrajectory,
    data: *mut *const f32,
    len: *mut usize,
) -> DwnetStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        *out_arg(data, "data")? = t.inner.data().as_ptr();
        *out_arg(len, "len")? = t.inner.data().len();
        Ok(())
    })
}

/// # Safety
/// `traj` must come from this library and not be used afterwards. NULL is
/// accepted.
#[no_mangle]
pub unsafe extern "C" fn dwnet_trajectory_free(traj: *mut DwnetTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Learning rate of epoch `i` of `n_total`, scaled by `alpha`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_lr_schedule(i: u64, n_total: u64, alpha: f64, out: *mut f64) -> DwnetStatus {
    guard(|| {
        *out_arg(out, "out")? = lr_schedule(i as usize, n_total as usize, alpha);
        Ok(())
    })
}

/// Field-averaged relative L2 error of one `(fields, H, W)` frame.
///
/// # Safety
/// `pred` and `truth` must hold `len` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_scaled_l2(
    pred: *const f32,
    truth: *const f32,
    len: usize,
    fields: u32,
    out: *mut f64,
) -> DwnetStatus {
    guard(|| {
        let p = slice_arg(pred, len, "pred")?;
        let t = slice_arg(truth, len, "truth")?;
        *out_arg(out, "out")? = metrics::scaled_l2(p, t, fields as usize)?;
        Ok(())
    })
}

/// Variance-normalized squared deviation of two diagnostic vectors.
///
/// # Safety
/// `y` and `y_true` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_stat_err(y: *const f64, y_true: *const f64, len: usize, out: *mut f64) -> DwnetStatus {
    guard(|| {
        let a = slice_arg(y, len, "y")?;
        let b = slice_arg(y_true, len, "y_true")?;
        *out_arg(out, "out")? = metrics::stat_err(a, b)?;
        Ok(())
    })
}

/// Indices of the non-dominated `(cost, error)` points, by ascending cost.
/// `out_len` receives the front size; if it exceeds `capacity` nothing is
/// written and `BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `cost` and `error` must hold `n` values; `out_idx` must have room for
/// `capacity` entries; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dwnet_pareto_front(
    cost: *const f64,
    error: *const f64,
    n: usize,
    out_idx: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> DwnetStatus {
    guard(|| {
        let c = slice_arg(cost, n, "cost")?;
        let e = slice_arg(error, n, "error")?;
        let len = out_arg(out_len, "out_len")?;
        let front = pareto_indices(c, e);
        *len = front.len();
        if front.len() > capacity {
            return Err(Fail(DwnetStatus::BufferTooSmall, format!("front has {} points", front.len())));
        }
        if !front.is_empty() {
            if out_idx.is_null() {
                return Err(null("out_idx"));
            }
            std::slice::from_raw_parts_mut(out_idx, front.len()).copy_from_slice(&front);
        }
        Ok(())
    })
}
