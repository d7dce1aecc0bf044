//! C ABI over the scene-editing pipeline.
//!
//! Conventions:
//! - Every handle type is opaque; callers hold `Vp*` pointers created by the
//!   matching constructor and release them with the matching `_free`.
//! - Fallible calls return [`VpStatus`]; `VP_STATUS_OK` is zero. On failure a
//!   thread-local message is stored, readable via [`vp_last_error_message`]
//!   until the next failing call on the same thread.
//! - Panics never unwind across the boundary: they are caught and reported
//!   as `VP_STATUS_PANIC`.
//! - `_free` functions accept null and do nothing.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use vpedit::demo::{build_demo_scene, demo_denoiser, demo_path, render_views};
use vpedit::pipeline::{apply_overrides, run_edit, EditConfig, PipelineOutput};
use vpedit::scene::io::{load_scene, save_scene};
use vpedit::scene::PointScene;
use vpedit::trajectory::{load_trajectory, save_trajectory, CameraPath};
use vpedit::Error;

/// Result of every fallible call. Zero means success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Input data or configuration failed validation.
    InvalidInput = 3,
    /// A file or config string could not be parsed.
    Parse = 4,
    /// The operating system reported an I/O failure.
    Io = 5,
    /// The computation itself failed.
    Runtime = 6,
    /// An internal invariant was violated; the library caught a panic.
    Panic = 7,
}

/// Opaque colored point scene.
pub struct VpScene {
    inner: PointScene,
}

/// Opaque camera trajectory (cameras plus key-view indices).
pub struct VpPath {
    inner: CameraPath,
}

/// Opaque pipeline configuration.
pub struct VpConfig {
    inner: EditConfig,
}

/// Opaque result of an edit run: updated scene, edited frames, counters.
pub struct VpOutput {
    inner: PipelineOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(sanitized).expect("nul bytes stripped"));
    });
}

fn fail(e: Error) -> VpStatus {
    let status = match e {
        Error::InvalidInput(_) => VpStatus::InvalidInput,
        Error::Parse(_) => VpStatus::Parse,
        Error::Io(_) => VpStatus::Io,
        Error::Runtime(_) => VpStatus::Runtime,
    };
    set_error(e.to_string());
    status
}

fn fail_null(what: &str) -> VpStatus {
    set_error(format!("{what} is null"));
    VpStatus::NullPointer
}

/// Runs `f`, converting panics into `VP_STATUS_PANIC`.
fn guard<F: FnOnce() -> VpStatus>(f: F) -> VpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let text = if let Some(s) = payload.downcast_ref::<&str>() {
                (*s).to_string()
            } else if let Some(s) = payload.downcast_ref::<String>() {
                s.clone()
            } else {
                "unknown panic".to_string()
            };
            set_error(format!("internal panic: {text}"));
            VpStatus::Panic
        }
    }
}

unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, VpStatus> {
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        VpStatus::Utf8
    })
}

unsafe fn handle_ref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, VpStatus> {
    ptr.as_ref().ok_or_else(|| fail_null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, VpStatus> {
    ptr.as_mut().ok_or_else(|| fail_null(what))
}

unsafe fn out_slot<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, VpStatus> {
    ptr.as_mut().ok_or_else(|| fail_null(what))
}

macro_rules! ffi_try {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

fn lib_try<T>(r: vpedit::Result<T>) -> Result<T, VpStatus> {
    r.map_err(fail)
}

// --------------------------------------------------------------------- misc

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn vp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the last failure on the calling thread, or null if none has
/// occurred. The pointer stays valid until the next failing call on this
/// thread; do not free it.
#[no_mangle]
pub extern "C" fn vp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

// ------------------------------------------------------------------- config

/// Creates a configuration with default values. Never fails.
/// Release with [`vp_config_free`].
#[no_mangle]
pub extern "C" fn vp_config_new() -> *mut VpConfig {
    Box::into_raw(Box::new(VpConfig { inner: EditConfig::default() }))
}

/// Sets one configuration key from its text form (the same `key = value`
/// pairs the config file format uses, e.g. `eta`/`0.15`, `steps`/`25`,
/// `editor`/`recolor`, `gain_g`/`0.5`). The full new value set is
/// re-validated, so invalid combinations are rejected atomically.
///
/// # Safety
/// `cfg` must be a live pointer from [`vp_config_new`]; `key` and `value`
/// must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vp_config_set(
    cfg: *mut VpConfig,
    key: *const c_char,
    value: *const c_char,
) -> VpStatus {
    guard(|| {
        let cfg = ffi_try!(handle_mut(cfg, "cfg"));
        let key = ffi_try!(utf8_arg(key, "key"));
        let value = ffi_try!(utf8_arg(value, "value"));
        let pairs = [(key.to_string(), value.to_string())];
        cfg.inner = ffi_try!(lib_try(apply_overrides(cfg.inner.clone(), &pairs)));
        VpStatus::Ok
    })
}

/// Overrides the sampling seed.
///
/// # Safety
/// `cfg` must be a live pointer from [`vp_config_new`].
#[no_mangle]
pub unsafe extern "C" fn vp_config_set_seed(cfg: *mut VpConfig, seed: u64) -> VpStatus {
    guard(|| {
        let cfg = ffi_try!(handle_mut(cfg, "cfg"));
        cfg.inner.seed = seed;
        VpStatus::Ok
    })
}

/// Releases a configuration. Accepts null.
///
/// # Safety
/// `cfg` must be null or a pointer returned by [`vp_config_new`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn vp_config_free(cfg: *mut VpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// -------------------------------------------------------------------- scene

/// Builds the built-in textured-cube demo scene. Never fails.
/// Release with [`vp_scene_free`].
#[no_mangle]
pub extern "C" fn vp_scene_demo() -> *mut VpScene {
    Box::into_raw(Box::new(VpScene { inner: build_demo_scene() }))
}

/// Loads a point scene from its text format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn vp_scene_load(path: *const c_char, out: *mut *mut VpScene) -> VpStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        let path = ffi_try!(utf8_arg(path, "path"));
        let scene = ffi_try!(lib_try(load_scene(Path::new(path))));
        *slot = Box::into_raw(Box::new(VpScene { inner: scene }));
        VpStatus::Ok
    })
}

/// Saves a point scene in its text format.
///
/// # Safety
/// `scene` must be a live scene handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vp_scene_save(scene: *const VpScene, path: *const c_char) -> VpStatus {
    guard(|| {
        let scene = ffi_try!(handle_ref(scene, "scene"));
        let path = ffi_try!(utf8_arg(path, "path"));
        ffi_try!(lib_try(save_scene(&scene.inner, Path::new(path))));
        VpStatus::Ok
    })
}

/// Number of points in the scene.
///
/// # Safety
/// `scene` must be a live scene handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_scene_point_count(
    scene: *const VpScene,
    out: *mut usize,
) -> VpStatus {
    guard(|| {
        let scene = ffi_try!(handle_ref(scene, "scene"));
        let slot = ffi_try!(out_slot(out, "out"));
        *slot = scene.inner.len();
        VpStatus::Ok
    })
}

/// Releases a scene. Accepts null.
///
/// # Safety
/// `scene` must be null or an unfreed scene handle.
#[no_mangle]
pub unsafe extern "C" fn vp_scene_free(scene: *mut VpScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

// --------------------------------------------------------------- trajectory

/// Builds the demo orbit trajectory with `frames` cameras (at least 2).
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn vp_path_demo(frames: usize, out: *mut *mut VpPath) -> VpStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        let path = ffi_try!(lib_try(demo_path(frames)));
        *slot = Box::into_raw(Box::new(VpPath { inner: path }));
        VpStatus::Ok
    })
}

/// Loads a trajectory from its text format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_path_load(path: *const c_char, out: *mut *mut VpPath) -> VpStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        let path = ffi_try!(utf8_arg(path, "path"));
        let loaded = ffi_try!(lib_try(load_trajectory(Path::new(path))));
        *slot = Box::into_raw(Box::new(VpPath { inner: loaded }));
        VpStatus::Ok
    })
}

/// Saves a trajectory in its text format.
///
/// # Safety
/// `path` must be a live trajectory handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vp_path_save(path: *const VpPath, file: *const c_char) -> VpStatus {
    guard(|| {
        let path = ffi_try!(handle_ref(path, "path"));
        let file = ffi_try!(utf8_arg(file, "file"));
        ffi_try!(lib_try(save_trajectory(&path.inner, Path::new(file))));
        VpStatus::Ok
    })
}

/// Number of cameras in the trajectory.
///
/// # Safety
/// `path` must be a live trajectory handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_path_frame_count(path: *const VpPath, out: *mut usize) -> VpStatus {
    guard(|| {
        let path = ffi_try!(handle_ref(path, "path"));
        let slot = ffi_try!(out_slot(out, "out"));
        *slot = path.inner.cameras.len();
        VpStatus::Ok
    })
}

/// Releases a trajectory. Accepts null.
///
/// # Safety
/// `path` must be null or an unfreed trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn vp_path_free(path: *mut VpPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

// --------------------------------------------------------------------- edit

/// Runs the full editing pipeline: renders the scene along the trajectory,
/// inverts the renders into the diffusion prior once, re-samples them with
/// the configured edit as condition, and updates the scene from the edited
/// frames. The editor configured via `editor`/`gain_*`/`bias_*`/… keys
/// drives both the edit and its stand-in denoiser.
///
/// # Safety
/// `scene`, `path`, and `cfg` must be live handles; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn vp_edit_run(
    scene: *const VpScene,
    path: *const VpPath,
    cfg: *const VpConfig,
    out: *mut *mut VpOutput,
) -> VpStatus {
    guard(|| {
        let scene = ffi_try!(handle_ref(scene, "scene"));
        let path = ffi_try!(handle_ref(path, "path"));
        let cfg = ffi_try!(handle_ref(cfg, "cfg"));
        let slot = ffi_try!(out_slot(out, "out"));
        let source = render_views(&scene.inner, &path.inner.cameras);
        let denoiser = ffi_try!(lib_try(demo_denoiser(
            &source,
            &cfg.inner.editor,
            cfg.inner.factor
        )));
        let output = ffi_try!(lib_try(run_edit(
            &scene.inner,
            &path.inner,
            &cfg.inner.editor,
            None,
            &denoiser,
            &cfg.inner,
        )));
        *slot = Box::into_raw(Box::new(VpOutput { inner: output }));
        VpStatus::Ok
    })
}

// ------------------------------------------------------------------- output

/// Number of edited frames.
///
/// # Safety
/// `output` must be a live output handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_frame_count(
    output: *const VpOutput,
    out: *mut usize,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let slot = ffi_try!(out_slot(out, "out"));
        *slot = output.inner.frames.len();
        VpStatus::Ok
    })
}

/// Pixel dimensions of the edited frames.
///
/// # Safety
/// `output` must be a live output handle; `height` and `width` writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_frame_size(
    output: *const VpOutput,
    height: *mut usize,
    width: *mut usize,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let h = ffi_try!(out_slot(height, "height"));
        let w = ffi_try!(out_slot(width, "width"));
        let first = match output.inner.frames.first() {
            Some(f) => f,
            None => {
                set_error("output has no frames".to_string());
                return VpStatus::InvalidInput;
            }
        };
        *h = first.shape()[0];
        *w = first.shape()[1];
        VpStatus::Ok
    })
}

/// Copies edited frame `index` into `buffer` as row-major H×W×3 floats in
/// [0, 1]. `buffer_len` must equal exactly height·width·3.
///
/// # Safety
/// `output` must be a live output handle; `buffer` must point to at least
/// `buffer_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn vp_output_read_frame(
    output: *const VpOutput,
    index: usize,
    buffer: *mut f32,
    buffer_len: usize,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        if buffer.is_null() {
            return fail_null("buffer");
        }
        let frame = match output.inner.frames.get(index) {
            Some(f) => f,
            None => {
                set_error(format!(
                    "frame index {index} out of range ({} frames)",
                    output.inner.frames.len()
                ));
                return VpStatus::InvalidInput;
            }
        };
        let needed = frame.len();
        if buffer_len != needed {
            set_error(format!("buffer_len is {buffer_len}, frame needs exactly {needed}"));
            return VpStatus::InvalidInput;
        }
        let dst = std::slice::from_raw_parts_mut(buffer, needed);
        for (d, s) in dst.iter_mut().zip(frame.iter()) {
            *d = *s;
        }
        VpStatus::Ok
    })
}

/// Stage invocation counters for the run, in pipeline order.
///
/// # Safety
/// `output` must be a live output handle; all four out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_counters(
    output: *const VpOutput,
    render: *mut usize,
    invert: *mut usize,
    sample: *mut usize,
    update: *mut usize,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let r = ffi_try!(out_slot(render, "render"));
        let i = ffi_try!(out_slot(invert, "invert"));
        let s = ffi_try!(out_slot(sample, "sample"));
        let u = ffi_try!(out_slot(update, "update"));
        let c = &output.inner.counters;
        *r = c.render;
        *i = c.invert;
        *s = c.sample;
        *u = c.update;
        VpStatus::Ok
    })
}

/// First and last loss of the scene-updating stage.
///
/// # Safety
/// `output` must be a live output handle; both out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_losses(
    output: *const VpOutput,
    initial: *mut f64,
    final_: *mut f64,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let i = ffi_try!(out_slot(initial, "initial"));
        let f = ffi_try!(out_slot(final_, "final"));
        *i = output.inner.update.initial_loss;
        *f = output.inner.update.final_loss;
        VpStatus::Ok
    })
}

/// Index of the frame the edit was conditioned on.
///
/// # Safety
/// `output` must be a live output handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_condition_index(
    output: *const VpOutput,
    out: *mut usize,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let slot = ffi_try!(out_slot(out, "out"));
        *slot = output.inner.condition_index;
        VpStatus::Ok
    })
}

/// Clones the updated scene into a fresh scene handle.
///
/// # Safety
/// `output` must be a live output handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vp_output_updated_scene(
    output: *const VpOutput,
    out: *mut *mut VpScene,
) -> VpStatus {
    guard(|| {
        let output = ffi_try!(handle_ref(output, "output"));
        let slot = ffi_try!(out_slot(out, "out"));
        *slot = Box::into_raw(Box::new(VpScene { inner: output.inner.scene.clone() }));
        VpStatus::Ok
    })
}

/// Releases an output. Accepts null.
///
/// # Safety
/// `output` must be null or an unfreed output handle.
#[no_mangle]
pub unsafe extern "C" fn vp_output_free(output: *mut VpOutput) {
    if !output.is_null() {
        drop(Box::from_raw(output));
    }
}
