//! C ABI over the restcn library.
//!
//! All functions are `extern "C"`, handles are opaque pointers, and every
//! fallible call returns a status code; the message behind the most recent
//! failure is available per thread via `restcn_last_error`.
//!
//! Buffers cross the boundary as row-major `double` arrays with explicit
//! extents; the caller owns every buffer it passes or receives.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use restcn::checkpoint::{self, Checkpoint, CheckpointModel};
use restcn::error::Error;
use restcn::fmd;
use restcn::tensor::Tensor;

/// Status codes mirroring the library's error classes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum RestcnStatus {
    Ok = 0,
    /// Invalid configuration or parameter.
    Config = 2,
    /// Bad input data or files.
    Data = 3,
    /// A computation diverged.
    Numeric = 4,
    /// A required pointer argument was null.
    NullArg = 10,
    /// A string argument was not valid UTF-8.
    Utf8 = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
}

fn fail(e: &Error) -> RestcnStatus {
    set_error(&e.to_string());
    match e.exit_code() {
        2 => RestcnStatus::Config,
        4 => RestcnStatus::Numeric,
        _ => RestcnStatus::Data,
    }
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn restcn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// An opened checkpoint: the model plus its preprocessing state.
pub struct RestcnCheckpoint {
    inner: Checkpoint,
}

/// Loads a checkpoint directory (as written by `restcn train` / `refine`).
/// On success writes a handle into `out`; free it with
/// `restcn_checkpoint_free`.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn restcn_checkpoint_load(
    dir: *const c_char,
    out: *mut *mut RestcnCheckpoint,
) -> RestcnStatus {
    if dir.is_null() || out.is_null() {
        set_error("null argument");
        return RestcnStatus::NullArg;
    }
    let dir = match CStr::from_ptr(dir).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("dir is not valid UTF-8");
            return RestcnStatus::Utf8;
        }
    };
    match checkpoint::load(Path::new(dir)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(RestcnCheckpoint { inner }));
            RestcnStatus::Ok
        }
        Err(e) => {
            *out = ptr::null_mut();
            fail(&e)
        }
    }
}

/// Releases a checkpoint handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from `restcn_checkpoint_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn restcn_checkpoint_free(handle: *mut RestcnCheckpoint) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Per-frame feature width the model expects.
///
/// # Safety
/// `handle` must be a live checkpoint handle.
#[no_mangle]
pub unsafe extern "C" fn restcn_input_dim(handle: *const RestcnCheckpoint) -> usize {
    match &(*handle).inner.model {
        CheckpointModel::ResTCN(m) => m.config.input_dim,
        CheckpointModel::MsResTCN(m) => m.config.base.input_dim,
    }
}

/// Number of output classes.
///
/// # Safety
/// `handle` must be a live checkpoint handle.
#[no_mangle]
pub unsafe extern "C" fn restcn_num_classes(handle: *const RestcnCheckpoint) -> usize {
    match &(*handle).inner.model {
        CheckpointModel::ResTCN(m) => m.config.num_classes,
        CheckpointModel::MsResTCN(m) => m.config.base.num_classes,
    }
}

/// 1 when the checkpoint holds the two-stream refined model.
///
/// # Safety
/// `handle` must be a live checkpoint handle.
#[no_mangle]
pub unsafe extern "C" fn restcn_is_multistream(handle: *const RestcnCheckpoint) -> i32 {
    matches!(&(*handle).inner.model, CheckpointModel::MsResTCN(_)) as i32
}

unsafe fn input_tensor(
    handle: &RestcnCheckpoint,
    input: *const f64,
    num_frames: usize,
    dim: usize,
) -> Result<Tensor, RestcnStatus> {
    if input.is_null() {
        set_error("null input buffer");
        return Err(RestcnStatus::NullArg);
    }
    let want = match &handle.inner.model {
        CheckpointModel::ResTCN(m) => m.config.input_dim,
        CheckpointModel::MsResTCN(m) => m.config.base.input_dim,
    };
    if dim != want {
        set_error(&format!("input dim {dim} does not match the model's {want}"));
        return Err(RestcnStatus::Data);
    }
    let data = std::slice::from_raw_parts(input, num_frames * dim).to_vec();
    Tensor::from_vec(&[1, num_frames, dim], data).map_err(|e| fail(&e))
}

/// Eval-mode class scores for one sequence. `input` is row-major
/// `num_frames x dim` (already mean-subtracted, like the training inputs);
/// `logits_out` receives `restcn_num_classes` values.
///
/// # Safety
/// Buffers must be valid for the stated extents.
#[no_mangle]
pub unsafe extern "C" fn restcn_predict(
    handle: *const RestcnCheckpoint,
    input: *const f64,
    num_frames: usize,
    dim: usize,
    logits_out: *mut f64,
) -> RestcnStatus {
    if handle.is_null() || logits_out.is_null() {
        set_error("null argument");
        return RestcnStatus::NullArg;
    }
    let handle = &*handle;
    let batch = match input_tensor(handle, input, num_frames, dim) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let logits = match &handle.inner.model {
        CheckpointModel::ResTCN(m) => m.forward_eval(&batch, false).map(|o| o.logits),
        CheckpointModel::MsResTCN(m) => m.forward_eval(&batch, false).map(|o| o.logits),
    };
    match logits {
        Ok(logits) => {
            let k = logits.shape()[1];
            std::slice::from_raw_parts_mut(logits_out, k).copy_from_slice(logits.data());
            RestcnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Runs one recorded forward pass and decodes the activation of `layer`
/// (1..=10) back to skeleton space, mean skeleton restored. `frames_out`
/// receives `num_frames x dim` values. Only single-stream checkpoints
/// decode.
///
/// # Safety
/// Buffers must be valid for the stated extents.
#[no_mangle]
pub unsafe extern "C" fn restcn_decode_layer(
    handle: *const RestcnCheckpoint,
    input: *const f64,
    num_frames: usize,
    dim: usize,
    layer: usize,
    frames_out: *mut f64,
) -> RestcnStatus {
    if handle.is_null() || frames_out.is_null() {
        set_error("null argument");
        return RestcnStatus::NullArg;
    }
    let handle = &*handle;
    let batch = match input_tensor(handle, input, num_frames, dim) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let model = match handle.inner.as_restcn() {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    let decoded = model
        .forward_eval(&batch, true)
        .and_then(|out| {
            let bundle = &out.bundles.expect("recording requested")[0];
            fmd::decode(bundle, model, layer, &handle.inner.mean)
        });
    match decoded {
        Ok(dec) => {
            std::slice::from_raw_parts_mut(frames_out, num_frames * dim)
                .copy_from_slice(dec.frames.data());
            RestcnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Renders first-layer filter `filter_id` as skeleton frames (mean added):
/// `frames_out` receives `first_filter_len x dim` values, and the filter
/// length is written to `frames_len_out`.
///
/// # Safety
/// `frames_out` must hold `restcn_first_filter_len(handle) * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn restcn_filter_skeleton(
    handle: *const RestcnCheckpoint,
    filter_id: usize,
    frames_out: *mut f64,
    frames_len_out: *mut usize,
) -> RestcnStatus {
    if handle.is_null() || frames_out.is_null() || frames_len_out.is_null() {
        set_error("null argument");
        return RestcnStatus::NullArg;
    }
    let handle = &*handle;
    let model = match handle.inner.as_restcn() {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    match fmd::filter_to_skeleton(model, filter_id, &handle.inner.mean, &handle.inner.layout) {
        Ok(seq) => {
            let flat = seq.flatten();
            *frames_len_out = seq.num_frames;
            std::slice::from_raw_parts_mut(frames_out, flat.len()).copy_from_slice(flat.data());
            RestcnStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// First-layer filter length (frames per filter strip).
///
/// # Safety
/// `handle` must be a live checkpoint handle.
#[no_mangle]
pub unsafe extern "C" fn restcn_first_filter_len(handle: *const RestcnCheckpoint) -> usize {
    match &(*handle).inner.model {
        CheckpointModel::ResTCN(m) => m.config.first_filter_len,
        CheckpointModel::MsResTCN(m) => m.config.base.first_filter_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use restcn::dataio::{DimLayout, MeanSkeleton};
    use restcn::restcn::{build_restcn, ResTCNConfig};

    fn tiny_checkpoint(dir: &Path) {
        let config = ResTCNConfig {
            input_dim: 6,
            num_classes: 3,
            block_channels: [2, 3, 4],
            first_filter_len: 4,
            unit_filter_len: 4,
            dropout_p: 0.5,
            downsample: true,
        };
        let model = build_restcn(&config, 5).unwrap();
        let mean = MeanSkeleton { values: Tensor::filled(&[6], 0.5) };
        let layout = DimLayout { joint_names: vec!["a".into(), "b".into()], actor_slots: 1 };
        checkpoint::save_restcn(dir, &model, &mean, &layout).unwrap();
    }

    #[test]
    fn load_predict_decode_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        tiny_checkpoint(dir.path());
        let c_dir = CString::new(dir.path().to_str().unwrap()).unwrap();

        unsafe {
            let mut handle: *mut RestcnCheckpoint = ptr::null_mut();
            let status = restcn_checkpoint_load(c_dir.as_ptr(), &mut handle);
            assert!(matches!(status, RestcnStatus::Ok));
            assert_eq!(restcn_input_dim(handle), 6);
            assert_eq!(restcn_num_classes(handle), 3);
            assert_eq!(restcn_is_multistream(handle), 0);
            assert_eq!(restcn_first_filter_len(handle), 4);

            let t = 10usize;
            let input: Vec<f64> = (0..t * 6).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut logits = vec![0.0f64; 3];
            let status = restcn_predict(handle, input.as_ptr(), t, 6, logits.as_mut_ptr());
            assert!(matches!(status, RestcnStatus::Ok));
            assert!(logits.iter().all(|v| v.is_finite()));

            // Must agree with the library called directly.
            let loaded = checkpoint::load(dir.path()).unwrap();
            let model = loaded.as_restcn().unwrap();
            let batch = Tensor::from_vec(&[1, t, 6], input.clone()).unwrap();
            let expect = model.forward_eval(&batch, false).unwrap().logits;
            assert_eq!(logits.as_slice(), expect.data());

            let mut frames = vec![0.0f64; t * 6];
            let status = restcn_decode_layer(handle, input.as_ptr(), t, 6, 7, frames.as_mut_ptr());
            assert!(matches!(status, RestcnStatus::Ok));
            let bundle = &model.forward_eval(&batch, true).unwrap().bundles.unwrap()[0];
            let expect = fmd::decode(bundle, model, 7, &loaded.mean).unwrap();
            assert_eq!(frames.as_slice(), expect.frames.data());

            let mut strip = vec![0.0f64; 4 * 6];
            let mut strip_len = 0usize;
            let status = restcn_filter_skeleton(handle, 1, strip.as_mut_ptr(), &mut strip_len);
            assert!(matches!(status, RestcnStatus::Ok));
            assert_eq!(strip_len, 4);

            restcn_checkpoint_free(handle);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        unsafe {
            let mut handle: *mut RestcnCheckpoint = ptr::null_mut();
            let bogus = CString::new("/nonexistent/checkpoint").unwrap();
            let status = restcn_checkpoint_load(bogus.as_ptr(), &mut handle);
            assert!(matches!(status, RestcnStatus::Data));
            assert!(handle.is_null());
            let msg = CStr::from_ptr(restcn_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());

            let status = restcn_checkpoint_load(ptr::null(), &mut handle);
            assert!(matches!(status, RestcnStatus::NullArg));
        }
    }

    #[test]
    fn dimension_mismatch_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        tiny_checkpoint(dir.path());
        let c_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
        unsafe {
            let mut handle: *mut RestcnCheckpoint = ptr::null_mut();
            restcn_checkpoint_load(c_dir.as_ptr(), &mut handle);
            let input = vec![0.0f64; 10 * 5];
            let mut logits = vec![0.0f64; 3];
            let status = restcn_predict(handle, input.as_ptr(), 10, 5, logits.as_mut_ptr());
            assert!(matches!(status, RestcnStatus::Data));
            restcn_checkpoint_free(handle);
        }
    }

    #[test]
    fn generated_header_declares_the_surface() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/restcn.h");
        let text = std::fs::read_to_string(header).expect("cbindgen header exists");
        for symbol in [
            "restcn_checkpoint_load",
            "restcn_checkpoint_free",
            "restcn_predict",
            "restcn_decode_layer",
            "restcn_filter_skeleton",
            "restcn_last_error",
            "RestcnStatus",
        ] {
            assert!(text.contains(symbol), "header lacks {symbol}");
        }
    }
}
