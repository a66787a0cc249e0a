//! Streaming fixed-point image pipeline.
//!
//! Raw Bayer samples enter as [`PixelToken`]s in raster order and move one
//! token at a time through valid/ready links:
//!
//! ```text
//! DPC -> AWB -> demosaic -> NLM -> gamma -> CSC -> sharpen
//! ```
//!
//! Neighbourhood stages keep only a ring of line buffers, never a frame.
//! Disabled stages are left out of the chain. Every arithmetic step is integer
//! with round-half-up, so the output bytes do not depend on the platform or on
//! how the stages are scheduled.

mod awb;
mod config;
mod csc;
mod demosaic;
mod dpc;
mod gamma;
mod nlm;
mod pipeline;
mod stage;
mod stream;
mod token;
mod window;

pub use awb::{awb_apply, AwbError, awb_gains, awb_gains_from_means, awb_stats, AwbStats};
pub use config::{AwbConfig, CscConfig, DpcConfig, GammaConfig, IspConfig, NlmConfig, SharpenConfig, StatsConfig, Toggle};
pub use csc::{rgb_to_ycbcr, sharpen_luma, ycbcr_to_rgb, CscMatrix, BLUR_3X3};
pub use demosaic::{demosaic_pixel, kernel_for, MhcKernel, MHC_KERNELS, MHC_SHIFT};
pub use dpc::{dpc_correct, dpc_detect};
pub use gamma::{gamma_build_lut, GammaLut};
pub use nlm::{nlm_filter, nlm_weight, NlmLut, NLM_LUT_SIZE};
pub use pipeline::{run_pipeline, AwbReport, IspOutput, IspPipeline, IspState, IspStats, NlmStats};
pub use stage::{Stage, StageKind};
pub use stream::{run_polled, run_threaded, LinkStats, Schedule, StallConfig, StreamReport};
pub use token::{frame_from_stream, stream_from_frame, PixelToken};
pub use window::{window_former, LineBuffer, Window};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IspError {
    #[error("framing error at token {index}: {reason}")]
    Framing { index: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frame {got} does not match pipeline geometry {expected}")]
    Geometry { expected: String, got: String },
    #[error("stream stalled with no progress after {cycles} cycles")]
    Deadlock { cycles: u64 },
    #[error("handshake violation on link {link}: {reason}")]
    Handshake { link: usize, reason: String },
    #[error("worker thread failed: {0}")]
    Worker(String),
}

pub type Result<T, E = IspError> = std::result::Result<T, E>;

/// Colour filter site of one Bayer pixel. `Gr` is the green on a row that
/// also holds red, `Gb` the green on a row with blue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaColor {
    R,
    Gr,
    Gb,
    B,
}

impl CfaColor {
    /// 0 = red, 1 = green, 2 = blue.
    pub fn channel(self) -> usize {
        match self {
            CfaColor::R => 0,
            CfaColor::Gr | CfaColor::Gb => 1,
            CfaColor::B => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BayerPattern {
    #[default]
    RGGB,
    BGGR,
    GRBG,
    GBRG,
}

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG, BayerPattern::GBRG];

    fn tile(self) -> [[CfaColor; 2]; 2] {
        use CfaColor::*;
        match self {
            BayerPattern::RGGB => [[R, Gr], [Gb, B]],
            BayerPattern::BGGR => [[B, Gb], [Gr, R]],
            BayerPattern::GRBG => [[Gr, R], [B, Gb]],
            BayerPattern::GBRG => [[Gb, B], [R, Gr]],
        }
    }

    #[inline]
    pub fn color_at(self, y: usize, x: usize) -> CfaColor {
        self.tile()[y & 1][x & 1]
    }

    pub fn name(self) -> &'static str {
        match self {
            BayerPattern::RGGB => "RGGB",
            BayerPattern::BGGR => "BGGR",
            BayerPattern::GRBG => "GRBG",
            BayerPattern::GBRG => "GBRG",
        }
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = IspError;

    fn from_str(s: &str) -> Result<Self> {
        BayerPattern::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| IspError::InvalidConfig(format!("unknown Bayer pattern {s:?}")))
    }
}

/// What the samples of a [`Frame`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    /// One sample per pixel, straight from the colour filter array.
    Bayer,
    Rgb,
    /// Studio-swing 8-bit YCbCr.
    YCbCr,
}

impl FrameFormat {
    pub fn channels(self) -> usize {
        match self {
            FrameFormat::Bayer => 1,
            FrameFormat::Rgb | FrameFormat::YCbCr => 3,
        }
    }
}

/// A whole image with interleaved channels. Used only at the edges of the
/// pipeline; the stages themselves never hold one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub format: FrameFormat,
    pub data: Vec<u16>,
}

impl Frame {
    pub fn new(width: usize, height: usize, bit_depth: u8, format: FrameFormat) -> Self {
        Frame { width, height, bit_depth, format, data: vec![0; width * height * format.channels()] }
    }

    pub fn bayer(width: usize, height: usize, bit_depth: u8, data: Vec<u16>) -> Result<Self> {
        let f = Frame { width, height, bit_depth, format: FrameFormat::Bayer, data };
        f.validate()?;
        Ok(f)
    }

    pub fn from_fn(width: usize, height: usize, bit_depth: u8, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Frame { width, height, bit_depth, format: FrameFormat::Bayer, data }
    }

    pub fn channels(&self) -> usize {
        self.format.channels()
    }

    pub fn max_value(&self) -> u16 {
        crate::fixed::max_sample(self.bit_depth)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u16 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u16) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(IspError::Geometry { expected: "at least 1x1".into(), got: self.dims_string() });
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(IspError::InvalidConfig(format!("bit depth {} out of range", self.bit_depth)));
        }
        if self.data.len() != self.width * self.height * self.channels() {
            return Err(IspError::Geometry {
                expected: format!("{} samples", self.width * self.height * self.channels()),
                got: format!("{} samples", self.data.len()),
            });
        }
        let max = self.max_value();
        if let Some(v) = self.data.iter().find(|&&v| v > max) {
            return Err(IspError::InvalidConfig(format!("sample {v} exceeds {}-bit range", self.bit_depth)));
        }
        Ok(())
    }

    pub fn dims_string(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    /// Samples as bytes: one byte each for depth ≤ 8, otherwise 16-bit little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        if self.bit_depth <= 8 {
            self.data.iter().map(|&v| v as u8).collect()
        } else {
            self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
        }
    }
}
