//! On-disk formats: PGM/PPM images with JSON sidecars, planar YCbCr dumps
//! and the JSON application configuration.
//!
//! Bayer frames are binary PGM (`P5`). Depths above 8 bits use two bytes
//! per sample, most significant first, as the PGM format requires. The
//! metadata lives next to the image in `<stem>.json`.

mod config;

pub use config::{
    load_config, parse_config, save_config, AppConfig, RunOptions, ScheduleKind, SCHEMA_VERSION,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::max_sample;
use crate::isp::{BayerPattern, Frame, FrameFormat};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: expected magic {expected}")]
    BadMagic { path: String, expected: &'static str },
    #[error("{0}")]
    DepthMismatch(String),
    #[error("missing sidecar {0}")]
    MissingSidecar(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("sample {value} at index {index} exceeds maxval {max}")]
    SampleRange { index: usize, value: u16, max: u16 },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("cannot write {0}")]
    Unsupported(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

/// Sidecar metadata of a Bayer frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub bayer_pattern: BayerPattern,
    /// Exposure interval `[t0, t1)` in µs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<[u64; 2]>,
}

impl FrameMeta {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(IoError::SchemaViolation { path: path.into(), message });
        if self.width == 0 || self.height == 0 {
            return bad("width", format!("frame {}x{} is empty", self.width, self.height));
        }
        if ![8, 10, 12].contains(&self.bit_depth) {
            return bad("bit_depth", format!("{} is not one of 8, 10, 12", self.bit_depth));
        }
        if let Some([t0, t1]) = self.exposure {
            if t1 <= t0 {
                return bad("exposure", format!("[{t0}, {t1}) is empty"));
            }
        }
        Ok(())
    }
}

/// `<dir>/<stem>.json` for `<dir>/<stem>.<ext>`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Reads a PNM header: magic, width, height, maxval, then exactly one
/// whitespace byte. Comments run from `#` to the end of the line.
fn parse_header<'a>(bytes: &'a [u8], magic: &'static str, path: &Path) -> Result<(usize, usize, u16, &'a [u8])> {
    if !bytes.starts_with(magic.as_bytes()) {
        return Err(IoError::BadMagic { path: path.display().to_string(), expected: magic });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::Header(format!("{}: expected a number at byte {start}", path.display())));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IoError::Header(format!("{}: number too large", path.display())))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IoError::Header(format!("{}: no separator after maxval", path.display())));
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > u16::MAX as usize {
        return Err(IoError::Header(format!("{}: bad geometry {w}x{h} maxval {maxval}", path.display())));
    }
    Ok((w, h, maxval as u16, &bytes[pos + 1..]))
}

fn read_samples(data: &[u8], count: usize, maxval: u16, path: &Path) -> Result<Vec<u16>> {
    let wide = maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    if data.len() != need {
        return Err(IoError::Header(format!("{}: {} data bytes, expected {need}", path.display(), data.len())));
    }
    let samples: Vec<u16> = if wide {
        data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    if let Some(index) = samples.iter().position(|&v| v > maxval) {
        return Err(IoError::SampleRange { index, value: samples[index], max: maxval });
    }
    Ok(samples)
}

fn write_pnm(path: &Path, magic: &str, width: usize, height: usize, maxval: u16, samples: &[u16]) -> Result<()> {
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.extend(samples.iter().flat_map(|v| v.to_be_bytes()));
    } else {
        out.extend(samples.iter().map(|&v| v as u8));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_meta(path: &Path) -> Result<FrameMeta> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingSidecar(path.display().to_string()),
        _ => IoError::Io(e),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let meta: FrameMeta = serde_path_to_error::deserialize(de).map_err(|e| IoError::SchemaViolation {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    meta.validate()?;
    Ok(meta)
}

pub fn save_meta(path: &Path, meta: &FrameMeta) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

/// Loads a Bayer PGM and its sidecar. The PGM maxval must be exactly the
/// sidecar's full-scale value.
pub fn load_bayer(path: &Path) -> Result<(Frame, FrameMeta)> {
    let meta = load_meta(&sidecar_path(path))?;
    let bytes = fs::read(path)?;
    let (w, h, maxval, data) = parse_header(&bytes, "P5", path)?;
    if (w, h) != (meta.width, meta.height) {
        return Err(IoError::DepthMismatch(format!(
            "{}: image is {w}x{h}, sidecar says {}x{}",
            path.display(),
            meta.width,
            meta.height
        )));
    }
    let full = max_sample(meta.bit_depth);
    if maxval != full {
        return Err(IoError::DepthMismatch(format!(
            "{}: maxval {maxval} does not match bit_depth {} (maxval {full})",
            path.display(),
            meta.bit_depth
        )));
    }
    let samples = read_samples(data, w * h, maxval, path)?;
    let frame = Frame { width: w, height: h, bit_depth: meta.bit_depth, format: FrameFormat::Bayer, data: samples };
    Ok((frame, meta))
}

/// Writes a Bayer frame as PGM plus sidecar. `meta` must describe `frame`.
pub fn save_bayer(path: &Path, frame: &Frame, meta: &FrameMeta) -> Result<()> {
    meta.validate()?;
    if frame.format != FrameFormat::Bayer
        || (frame.width, frame.height, frame.bit_depth) != (meta.width, meta.height, meta.bit_depth)
    {
        return Err(IoError::DepthMismatch(format!(
            "frame {} {}-bit {:?} does not match its metadata",
            frame.dims_string(),
            frame.bit_depth,
            frame.format
        )));
    }
    check_range(frame)?;
    write_pnm(path, "P5", frame.width, frame.height, frame.max_value(), &frame.data)?;
    save_meta(&sidecar_path(path), meta)
}

fn check_range(frame: &Frame) -> Result<()> {
    let max = frame.max_value();
    match frame.data.iter().position(|&v| v > max) {
        Some(index) => Err(IoError::SampleRange { index, value: frame.data[index], max }),
        None => Ok(()),
    }
}

/// Writes a single-channel frame (Bayer or luma) as PGM without a sidecar.
pub fn save_gray(path: &Path, frame: &Frame) -> Result<()> {
    if frame.channels() != 1 {
        return Err(IoError::Unsupported(format!("{:?} frame as PGM", frame.format)));
    }
    check_range(frame)?;
    write_pnm(path, "P5", frame.width, frame.height, frame.max_value(), &frame.data)
}

/// Writes an RGB frame as binary PPM with no comments.
pub fn save_rgb(path: &Path, frame: &Frame) -> Result<()> {
    if frame.format != FrameFormat::Rgb {
        return Err(IoError::Unsupported(format!("{:?} frame as PPM", frame.format)));
    }
    check_range(frame)?;
    write_pnm(path, "P6", frame.width, frame.height, frame.max_value(), &frame.data)
}

pub fn load_rgb(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path)?;
    let (w, h, maxval, data) = parse_header(&bytes, "P6", path)?;
    let bit_depth = (16 - maxval.leading_zeros()) as u8;
    if max_sample(bit_depth) != maxval {
        return Err(IoError::DepthMismatch(format!("{}: maxval {maxval} is not 2^n - 1", path.display())));
    }
    let samples = read_samples(data, w * h * 3, maxval, path)?;
    Ok(Frame { width: w, height: h, bit_depth, format: FrameFormat::Rgb, data: samples })
}

/// Sidecar of a planar YCbCr dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarMeta {
    pub width: usize,
    pub height: usize,
    pub format: FrameFormat,
    /// Plane order, always `"Y,Cb,Cr"`.
    pub planes: PlaneOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneOrder {
    #[serde(rename = "Y,Cb,Cr")]
    YCbCr,
}

/// Writes 8-bit YCbCr as three consecutive planes plus a sidecar.
pub fn save_ycbcr(path: &Path, frame: &Frame) -> Result<()> {
    if frame.format != FrameFormat::YCbCr || frame.bit_depth != 8 {
        return Err(IoError::Unsupported(format!("{}-bit {:?} frame as planar YCbCr", frame.bit_depth, frame.format)));
    }
    check_range(frame)?;
    let n = frame.width * frame.height;
    let mut out = vec![0u8; 3 * n];
    for (i, px) in frame.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * n + i] = px[c] as u8;
        }
    }
    fs::write(path, out)?;
    let meta = PlanarMeta { width: frame.width, height: frame.height, format: FrameFormat::YCbCr, planes: PlaneOrder::YCbCr };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_ycbcr(path: &Path) -> Result<Frame> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|_| IoError::MissingSidecar(side.display().to_string()))?;
    let meta: PlanarMeta = serde_json::from_str(&text)?;
    let bytes = fs::read(path)?;
    let n = meta.width * meta.height;
    if n == 0 || bytes.len() != 3 * n {
        return Err(IoError::Header(format!("{}: {} bytes for {}x{}", path.display(), bytes.len(), meta.width, meta.height)));
    }
    let mut f = Frame::new(meta.width, meta.height, 8, FrameFormat::YCbCr);
    for i in 0..n {
        for c in 0..3 {
            f.data[i * 3 + c] = bytes[c * n + i] as u16;
        }
    }
    Ok(f)
}

/// Converts pipeline output to something viewable as PPM.
pub fn ycbcr_frame_to_rgb(frame: &Frame) -> Frame {
    let mut out = Frame::new(frame.width, frame.height, 8, FrameFormat::Rgb);
    for (o, i) in out.data.chunks_exact_mut(3).zip(frame.data.chunks_exact(3)) {
        o.copy_from_slice(&crate::isp::ycbcr_to_rgb([i[0], i[1], i[2]]));
    }
    out
}
