//! C ABI over the `neuroisp` core.
//!
//! Every function returns a [`NeuroispStatus`]. On failure the message is
//! available from [`neuroisp_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function; strings handed out
//! by the library are released with [`neuroisp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use neuroisp::cogloop::{apply_directive, load_scenario, run_scenario, NpuDirective};
use neuroisp::events::VoxelGrid;
use neuroisp::imgio::{parse_config, AppConfig};
use neuroisp::isp::{BayerPattern, Frame, IspOutput, IspPipeline, Schedule};
use neuroisp::snn::{load_checkpoint, SpikingNet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuroispStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Pipeline = 5,
    Network = 6,
    Loop = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuroispBayer {
    Rggb = 0,
    Bggr = 1,
    Grbg = 2,
    Gbrg = 3,
}

impl From<NeuroispBayer> for BayerPattern {
    fn from(b: NeuroispBayer) -> Self {
        match b {
            NeuroispBayer::Rggb => BayerPattern::RGGB,
            NeuroispBayer::Bggr => BayerPattern::BGGR,
            NeuroispBayer::Grbg => BayerPattern::GRBG,
            NeuroispBayer::Gbrg => BayerPattern::GBRG,
        }
    }
}

/// A configured image pipeline for one sensor geometry.
pub struct NeuroispPipeline {
    inner: IspPipeline,
    schedule: Schedule,
    last: Option<IspOutput>,
}

/// A spiking network loaded from a checkpoint.
pub struct NeuroispNet {
    inner: SpikingNet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(NeuroispStatus, String);

type Outcome = Result<(), Fail>;

fn fail<E: std::fmt::Display>(status: NeuroispStatus) -> impl FnOnce(E) -> Fail {
    move |e| Fail(status, e.to_string())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> NeuroispStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NeuroispStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NeuroispStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(NeuroispStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `s` must be NULL or a NUL-terminated string.
unsafe fn opt_str<'a>(s: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if s.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(s)
        .to_str()
        .map(Some)
        .map_err(|_| Fail(NeuroispStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `s` must be a NUL-terminated string.
unsafe fn req_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(s, what)?;
    Ok(opt_str(s, what)?.expect("checked non-null"))
}

fn give_string(s: String, out: *mut *mut c_char) -> Outcome {
    let c = CString::new(s).map_err(fail(NeuroispStatus::InvalidArgument))?;
    // SAFETY: the caller checked `out` for NULL.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn neuroisp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn neuroisp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a pipeline. `config_json` is a configuration document as accepted
/// by the command line tool, or NULL for the defaults.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_new(
    config_json: *const c_char,
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: NeuroispBayer,
    out: *mut *mut NeuroispPipeline,
) -> NeuroispStatus {
    guard(|| {
        non_null(out, "out")?;
        let config = match opt_str(config_json, "config_json")? {
            Some(text) => parse_config(text).map_err(fail(NeuroispStatus::Config))?,
            None => AppConfig::default(),
        };
        let inner = IspPipeline::new(config.isp(), width, height, bit_depth, pattern.into())
            .map_err(fail(NeuroispStatus::Config))?;
        let handle = NeuroispPipeline { inner, schedule: config.run.schedule.schedule(), last: None };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a pipeline from [`neuroisp_pipeline_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_free(p: *mut NeuroispPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Samples per output pixel under the current configuration: 1 or 3.
///
/// # Safety
/// `p` must be a live pipeline and `channels` writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_output_channels(
    p: *const NeuroispPipeline,
    channels: *mut usize,
) -> NeuroispStatus {
    guard(|| {
        non_null(p, "pipeline")?;
        non_null(channels, "channels")?;
        *channels = (*p).inner.output_format().channels();
        Ok(())
    })
}

/// Runs one raster-order Bayer frame of `width * height` samples. Writes
/// `width * height * channels` interleaved samples to `output`.
///
/// # Safety
/// `input` must hold `input_len` samples and `output` room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_run(
    p: *mut NeuroispPipeline,
    input: *const u16,
    input_len: usize,
    output: *mut u16,
    output_len: usize,
) -> NeuroispStatus {
    guard(|| {
        non_null(p, "pipeline")?;
        non_null(input, "input")?;
        non_null(output, "output")?;
        let h = &mut *p;
        let (w, hh) = h.inner.dims();
        if input_len != w * hh {
            return Err(Fail(NeuroispStatus::InvalidArgument, format!("input has {input_len} samples, expected {}", w * hh)));
        }
        let need = w * hh * h.inner.output_format().channels();
        if output_len < need {
            return Err(Fail(NeuroispStatus::BufferTooSmall, format!("output needs {need} samples")));
        }
        let data = std::slice::from_raw_parts(input, input_len).to_vec();
        let frame = Frame::bayer(w, hh, h.inner.bit_depth(), data).map_err(fail(NeuroispStatus::InvalidArgument))?;
        let result = h.inner.run_frame(&frame, &h.schedule).map_err(fail(NeuroispStatus::Pipeline))?;
        std::slice::from_raw_parts_mut(output, need).copy_from_slice(&result.frame.data);
        h.last = Some(result);
        Ok(())
    })
}

/// Statistics of the last frame as JSON. Free with [`neuroisp_string_free`].
///
/// # Safety
/// `p` must be a live pipeline and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_stats_json(
    p: *const NeuroispPipeline,
    out: *mut *mut c_char,
) -> NeuroispStatus {
    guard(|| {
        non_null(p, "pipeline")?;
        non_null(out, "out")?;
        let last = (*p).last.as_ref().ok_or_else(|| Fail(NeuroispStatus::InvalidArgument, "no frame has run yet".into()))?;
        give_string(serde_json::to_string(&last.stats).map_err(fail(NeuroispStatus::Pipeline))?, out)
    })
}

/// Applies a directive such as `{"gamma": 2.4}` from the next frame on. An
/// invalid directive changes nothing.
///
/// # Safety
/// `p` must be a live pipeline and `directive_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_pipeline_apply_directive(
    p: *mut NeuroispPipeline,
    directive_json: *const c_char,
) -> NeuroispStatus {
    guard(|| {
        non_null(p, "pipeline")?;
        let text = req_str(directive_json, "directive_json")?;
        let d: NpuDirective = serde_json::from_str(text).map_err(fail(NeuroispStatus::InvalidArgument))?;
        let h = &mut *p;
        let next = apply_directive(h.inner.config(), &d).map_err(fail(NeuroispStatus::InvalidArgument))?;
        h.inner.set_config(next).map_err(fail(NeuroispStatus::InvalidArgument))
    })
}

/// Loads a network checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_net_load(path: *const c_char, out: *mut *mut NeuroispNet) -> NeuroispStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = req_str(path, "path")?;
        let inner = load_checkpoint(&PathBuf::from(path)).map_err(|e| match e {
            neuroisp::snn::SnnError::Io(e) => Fail(NeuroispStatus::Io, e.to_string()),
            e => Fail(NeuroispStatus::Network, e.to_string()),
        })?;
        *out = Box::into_raw(Box::new(NeuroispNet { inner }));
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a network from [`neuroisp_net_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_net_free(net: *mut NeuroispNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Classifies one binary voxel grid laid out `[bin][polarity][y][x]` with
/// `bins` time bins and the network's input size.
///
/// # Safety
/// `voxels` must hold `len` bytes and `class_out` be writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_net_classify(
    net: *const NeuroispNet,
    voxels: *const u8,
    len: usize,
    bins: usize,
    class_out: *mut usize,
) -> NeuroispStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(voxels, "voxels")?;
        non_null(class_out, "class_out")?;
        let net = &(*net).inner;
        let [h, w] = net.spec.input;
        let mut grid = VoxelGrid::zeros(bins, h, w);
        if bins == 0 || len != grid.data.len() {
            return Err(Fail(NeuroispStatus::InvalidArgument, format!("expected {} voxel bytes", grid.data.len())));
        }
        let src = std::slice::from_raw_parts(voxels, len);
        if src.iter().any(|&v| v > 1) {
            return Err(Fail(NeuroispStatus::InvalidArgument, "voxel cells must be 0 or 1".into()));
        }
        grid.data.copy_from_slice(src);
        *class_out = net.forward(&grid).map_err(fail(NeuroispStatus::Network))?.predicted_class();
        Ok(())
    })
}

/// Runs a closed-loop scenario file and returns its directive log as JSON
/// lines. Free the log with [`neuroisp_string_free`].
///
/// # Safety
/// `path` must be NUL-terminated and `log_out` writable.
#[no_mangle]
pub unsafe extern "C" fn neuroisp_run_scenario(path: *const c_char, log_out: *mut *mut c_char) -> NeuroispStatus {
    guard(|| {
        non_null(log_out, "log_out")?;
        let path = req_str(path, "path")?;
        let s = load_scenario(&PathBuf::from(path)).map_err(fail(NeuroispStatus::Loop))?;
        let out = run_scenario(&s).map_err(fail(NeuroispStatus::Loop))?;
        give_string(out.log_jsonl(), log_out)
    })
}
