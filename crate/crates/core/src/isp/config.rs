use serde::{Deserialize, Serialize};

use super::{CscMatrix, IspError, Result};
use crate::fixed::GainQ8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IspConfig {
    pub dpc: DpcConfig,
    pub awb: AwbConfig,
    pub demosaic: Toggle,
    pub nlm: NlmConfig,
    pub gamma: GammaConfig,
    pub csc: CscConfig,
    pub sharpen: SharpenConfig,
    pub stats: StatsConfig,
    /// Region the last directive was aimed at, `[x, y, width, height]`.
    /// Informational only.
    pub roi: Option<[u32; 4]>,
    /// Incremented by every applied directive.
    pub revision: u64,
}

impl Default for IspConfig {
    fn default() -> Self {
        IspConfig {
            dpc: DpcConfig::default(),
            awb: AwbConfig::default(),
            demosaic: Toggle { enabled: true },
            nlm: NlmConfig::default(),
            gamma: GammaConfig::default(),
            csc: CscConfig::default(),
            sharpen: SharpenConfig::default(),
            stats: StatsConfig::default(),
            roi: None,
            revision: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggle {
    pub enabled: bool,
}

impl Default for Toggle {
    fn default() -> Self {
        Toggle { enabled: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpcConfig {
    pub enabled: bool,
    /// Minimum mean deviation from every directional pair, in sample units.
    pub threshold: u16,
}

impl Default for DpcConfig {
    fn default() -> Self {
        DpcConfig { enabled: true, threshold: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AwbConfig {
    pub enabled: bool,
    /// Recompute gains from each frame's statistics. When false, `gains` is
    /// applied as given.
    pub auto: bool,
    pub low: u16,
    pub high: u16,
    /// (R, G, B) in U4.8; the starting point in auto mode.
    pub gains: [GainQ8; 3],
}

impl Default for AwbConfig {
    fn default() -> Self {
        AwbConfig { enabled: true, auto: true, low: 16, high: 240, gains: [GainQ8::ONE; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlmConfig {
    pub enabled: bool,
    pub search_radius: usize,
    pub patch_radius: usize,
    /// Filter strength in sample units.
    pub h: f64,
}

impl Default for NlmConfig {
    fn default() -> Self {
        NlmConfig { enabled: true, search_radius: 3, patch_radius: 1, h: 8.0 }
    }
}

impl NlmConfig {
    pub fn window_side(&self) -> usize {
        2 * (self.search_radius + self.patch_radius) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub enabled: bool,
    /// Display gamma; the table applies `x^(1/exponent)`.
    pub exponent: f64,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig { enabled: true, exponent: 2.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CscConfig {
    pub enabled: bool,
    pub coeffs: [[i32; 3]; 3],
    pub offsets: [i32; 3],
}

impl Default for CscConfig {
    fn default() -> Self {
        let m = CscMatrix::default();
        CscConfig { enabled: true, coeffs: m.coeffs, offsets: m.offsets }
    }
}

impl CscConfig {
    pub fn matrix(&self) -> CscMatrix {
        CscMatrix { coeffs: self.coeffs, offsets: self.offsets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpenConfig {
    pub enabled: bool,
    /// U2.6 strength; 64 is 1.0.
    pub lambda: u8,
}

impl Default for SharpenConfig {
    fn default() -> Self {
        SharpenConfig { enabled: true, lambda: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Regions per side for the luma statistics.
    pub grid: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { grid: 4 }
    }
}

pub const MAX_SEARCH_RADIUS: usize = 7;
pub const MAX_PATCH_RADIUS: usize = 3;

impl IspConfig {
    /// First violated invariant as `(json path, message)`.
    pub fn violation(&self) -> Option<(String, String)> {
        let v = |p: &str, m: String| Some((p.to_string(), m));
        if self.awb.low >= self.awb.high {
            return v("awb.low", format!("low {} must be below high {}", self.awb.low, self.awb.high));
        }
        for (i, g) in self.awb.gains.iter().enumerate() {
            if !g.is_valid() {
                return v(&format!("awb.gains[{i}]"), format!("{} exceeds the U4.8 maximum {}", g.0, GainQ8::MAX.0));
            }
        }
        if !(self.nlm.h.is_finite() && self.nlm.h > 0.0) {
            return v("nlm.h", format!("strength {} must be positive", self.nlm.h));
        }
        if self.nlm.search_radius > MAX_SEARCH_RADIUS {
            return v("nlm.search_radius", format!("at most {MAX_SEARCH_RADIUS}"));
        }
        if self.nlm.patch_radius > MAX_PATCH_RADIUS {
            return v("nlm.patch_radius", format!("at most {MAX_PATCH_RADIUS}"));
        }
        if !(self.gamma.exponent.is_finite() && self.gamma.exponent > 0.0) {
            return v("gamma.exponent", format!("exponent {} must be positive", self.gamma.exponent));
        }
        if let Err(IspError::InvalidConfig(m)) = self.csc.matrix().validate() {
            return v("csc", m);
        }
        if self.csc.enabled && !self.demosaic.enabled {
            return v("csc.enabled", "colour conversion needs demosaic enabled".into());
        }
        if self.sharpen.enabled && !self.csc.enabled {
            return v("sharpen.enabled", "luma sharpening needs csc enabled".into());
        }
        if self.stats.grid == 0 {
            return v("stats.grid", "must be at least 1".into());
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.violation() {
            None => Ok(()),
            Some((path, msg)) => Err(IspError::InvalidConfig(format!("{path}: {msg}"))),
        }
    }

    /// Every stage switched off: the Bayer frame passes through untouched.
    pub fn all_disabled() -> Self {
        let mut c = IspConfig::default();
        c.dpc.enabled = false;
        c.awb.enabled = false;
        c.demosaic.enabled = false;
        c.nlm.enabled = false;
        c.gamma.enabled = false;
        c.csc.enabled = false;
        c.sharpen.enabled = false;
        c
    }
}
