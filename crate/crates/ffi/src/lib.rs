//! C interface to pocketseg: checkpoint loading, volumetric inference and overlap metrics.
//!
//! Every fallible function returns a [`PsStatus`]. On failure a message is kept
//! per thread and can be copied out with [`ps_last_error_message`].
//! Volumes cross the boundary as flat arrays with x varying fastest.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use pocketseg::arch::{load_checkpoint, TrainedModel};
use pocketseg::metrics;
use pocketseg::volume::{voxel_count, LabelMask, Sequence, Study, Volume3D};
use pocketseg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Shape = 6,
    UndefinedMetric = 7,
    Panic = 8,
    Other = 9,
}

/// Opaque handle to a loaded single-network model.
pub struct PsModel {
    inner: TrainedModel,
    name: std::ffi::CString,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Io { .. } | Error::MissingFile(_) => PsStatus::Io,
        Error::Parse(_) | Error::HeaderMismatch { .. } | Error::UnknownModelName(_) => PsStatus::Parse,
        Error::CheckpointMismatch(_) => PsStatus::Checkpoint,
        Error::ShapeMismatch(_)
        | Error::GridMismatch(_)
        | Error::ChannelMismatch { .. }
        | Error::PatchLargerThanVolume { .. }
        | Error::IndivisibleDims { .. }
        | Error::OddDimension(_)
        | Error::InvalidVolume(_) => PsStatus::Shape,
        Error::EmptyMask | Error::EmptyDenominator(_) => PsStatus::UndefinedMetric,
        Error::InvalidConfig(_) | Error::NonFiniteVoxel { .. } | Error::ZeroVariance => PsStatus::InvalidArgument,
        _ => PsStatus::Other,
    }
}

enum Failure {
    Status(PsStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn fail(status: PsStatus, msg: impl Into<String>) -> Failure {
    Failure::Status(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(PsStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_grid(dims: *const usize, spacing_mm: *const f64) -> Result<([usize; 3], [f64; 3]), Failure> {
    non_null(dims, "dims")?;
    non_null(spacing_mm, "spacing_mm")?;
    let d = [*dims, *dims.add(1), *dims.add(2)];
    let s = [*spacing_mm, *spacing_mm.add(1), *spacing_mm.add(2)];
    if d.contains(&0) {
        return Err(fail(PsStatus::InvalidArgument, "dims must be positive"));
    }
    Ok((d, s))
}

unsafe fn read_mask(values: *const u8, dims: [usize; 3], spacing: [f64; 3], what: &str) -> Result<LabelMask, Failure> {
    non_null(values, what)?;
    let n = voxel_count(dims);
    Ok(LabelMask::new(dims, spacing, std::slice::from_raw_parts(values, n).to_vec())?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ps_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint written by the training command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_model_load(path: *const c_char, out: *mut *mut PsModel) -> PsStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(PsStatus::InvalidArgument, "path is not UTF-8"))?;
        let inner = load_checkpoint(Path::new(path))?;
        let name = std::ffi::CString::new(inner.meta.model.to_string())
            .map_err(|_| fail(PsStatus::Other, "model name contains NUL"))?;
        *out = Box::into_raw(Box::new(PsModel { inner, name }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`ps_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_model_free(model: *mut PsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model name such as `BM[T1C]`; valid while the model lives. Null on a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_model_name(model: *const PsModel) -> *const c_char {
    model.as_ref().map_or(std::ptr::null(), |m| m.name.as_ptr())
}

/// Number of input volumes [`ps_model_predict`] expects. Zero on a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_model_input_count(model: *const PsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.meta.subsets.len())
}

/// Sequence name (`T1`, `T2`, `T1C` or `FL`) of input `index`; null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_model_input_sequence(model: *const PsModel, index: usize) -> *const c_char {
    let Some(m) = model.as_ref() else {
        return std::ptr::null();
    };
    match m.inner.meta.subsets.get(index) {
        Some(Sequence::T1) => c"T1".as_ptr(),
        Some(Sequence::T2) => c"T2".as_ptr(),
        Some(Sequence::T1C) => c"T1C".as_ptr(),
        Some(Sequence::FL) => c"FL".as_ptr(),
        None => std::ptr::null(),
    }
}

/// Runs sliding-window inference on one preprocessed study.
///
/// `inputs` holds [`ps_model_input_count`] volumes back to back, each of
/// `dims[0]*dims[1]*dims[2]` voxels, in the order reported by
/// [`ps_model_input_sequence`]. `foreground_prob` (optional) receives the
/// per-voxel foreground probability and `mask` (optional) the argmax label.
///
/// # Safety
/// `dims` and `spacing_mm` point to three values; buffers hold the sizes above.
#[no_mangle]
pub unsafe extern "C" fn ps_model_predict(
    model: *const PsModel,
    dims: *const usize,
    spacing_mm: *const f64,
    inputs: *const f32,
    patch_size: usize,
    stride: usize,
    foreground_prob: *mut f32,
    mask: *mut u8,
) -> PsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(inputs, "inputs")?;
        let m = &(*model).inner;
        let (dims, spacing) = read_grid(dims, spacing_mm)?;
        if patch_size == 0 || stride == 0 {
            return Err(fail(PsStatus::InvalidArgument, "patch_size and stride must be positive"));
        }
        let n = voxel_count(dims);
        let all = std::slice::from_raw_parts(inputs, n * m.meta.subsets.len());
        let mut sequences = BTreeMap::new();
        for (seq, chunk) in m.meta.subsets.iter().zip(all.chunks_exact(n)) {
            sequences.insert(*seq, Volume3D::new(dims, spacing, chunk.to_vec())?);
        }
        let study = Study {
            study_id: "ffi".into(),
            patient_id: "ffi".into(),
            sequences,
            gtv: None,
        };
        let probs = m.predict(&study, patch_size, stride)?;
        if !foreground_prob.is_null() {
            std::slice::from_raw_parts_mut(foreground_prob, n).copy_from_slice(probs.class_plane(1));
        }
        if !mask.is_null() {
            std::slice::from_raw_parts_mut(mask, n).copy_from_slice(probs.argmax_mask().values());
        }
        Ok(())
    })
}

unsafe fn mask_metric(
    pred: *const u8,
    truth: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    out: *mut f64,
    f: fn(&LabelMask, &LabelMask) -> pocketseg::Result<f64>,
) -> PsStatus {
    guard(|| {
        non_null(out, "out")?;
        let (dims, spacing) = read_grid(dims, spacing_mm)?;
        let p = read_mask(pred, dims, spacing, "pred")?;
        let t = read_mask(truth, dims, spacing, "truth")?;
        *out = f(&p, &t)?;
        Ok(())
    })
}

/// Dice similarity of two binary masks.
///
/// # Safety
/// Masks hold `dims[0]*dims[1]*dims[2]` bytes of 0/1; `dims`, `spacing_mm` point to three values.
#[no_mangle]
pub unsafe extern "C" fn ps_dice(
    pred: *const u8,
    truth: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    out: *mut f64,
) -> PsStatus {
    mask_metric(pred, truth, dims, spacing_mm, out, metrics::dice)
}

/// 95th-percentile symmetric surface distance in millimetres.
///
/// # Safety
/// As for [`ps_dice`].
#[no_mangle]
pub unsafe extern "C" fn ps_hd95(
    pred: *const u8,
    truth: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    out: *mut f64,
) -> PsStatus {
    mask_metric(pred, truth, dims, spacing_mm, out, metrics::hd95)
}

/// False-positive error: predicted voxels outside the truth over predicted voxels.
///
/// # Safety
/// As for [`ps_dice`].
#[no_mangle]
pub unsafe extern "C" fn ps_fpe(
    pred: *const u8,
    truth: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    out: *mut f64,
) -> PsStatus {
    mask_metric(pred, truth, dims, spacing_mm, out, metrics::fpe)
}

/// False-negative error: missed truth voxels over truth voxels.
///
/// # Safety
/// As for [`ps_dice`].
#[no_mangle]
pub unsafe extern "C" fn ps_fne(
    pred: *const u8,
    truth: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    out: *mut f64,
) -> PsStatus {
    mask_metric(pred, truth, dims, spacing_mm, out, metrics::fne)
}
