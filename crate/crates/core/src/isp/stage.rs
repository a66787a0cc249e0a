//! Pipeline stages behind a common streaming interface.
//!
//! Each stage owns one output register. A pointwise stage fills it as soon as
//! a token is pushed and is ready only while it is empty. A window stage
//! feeds a [`LineBuffer`] and fills the register from `step` once the next
//! output's neighbourhood is complete.

use super::awb::{awb_gains, AwbError, AwbStats};
use super::csc::{rgb_to_ycbcr, sharpen_luma, CscMatrix};
use super::demosaic::demosaic_pixel;
use super::dpc::{dpc_correct, dpc_detect};
use super::gamma::GammaLut;
use super::nlm::{NlmLut, NlmSlider};
use super::pipeline::{AwbReport, IspStats, NlmStats};
use super::token::check_flags;
use super::{BayerPattern, LineBuffer, PixelToken, Result, Window};
use crate::fixed::{round_shift, GainQ8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageKind {
    Dpc,
    Awb,
    Demosaic,
    Nlm,
    Gamma,
    Csc,
    Sharpen,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Dpc => "dpc",
            StageKind::Awb => "awb",
            StageKind::Demosaic => "demosaic",
            StageKind::Nlm => "nlm",
            StageKind::Gamma => "gamma",
            StageKind::Csc => "csc",
            StageKind::Sharpen => "sharpen",
        }
    }
}

pub trait Stage: Send {
    fn kind(&self) -> StageKind;
    /// Whether a token offered this cycle would be accepted.
    fn ready(&self) -> bool;
    /// Whether the stage becomes ready once its output register is taken in
    /// the same cycle.
    fn ready_when_drained(&self) -> bool {
        self.ready()
    }
    fn push(&mut self, t: PixelToken) -> Result<()>;
    /// Internal work that may fill the output register.
    fn step(&mut self);
    fn output(&self) -> Option<&PixelToken>;
    fn take(&mut self) -> Option<PixelToken>;
    /// Most lines ever live in the stage's line buffer, 0 for pointwise stages.
    fn peak_lines(&self) -> usize {
        0
    }
    fn line_capacity(&self) -> usize {
        0
    }
    fn report(&self, _stats: &mut IspStats) {}
}

/// Raster cursor and output register of a pointwise stage.
struct Point {
    width: usize,
    total: usize,
    index: usize,
    out: Option<PixelToken>,
}

impl Point {
    fn new(width: usize, height: usize) -> Self {
        Point { width, total: width * height, index: 0, out: None }
    }

    /// Validates framing and returns the raster position of the token.
    fn accept(&mut self, t: &PixelToken) -> Result<(usize, usize)> {
        debug_assert!(self.out.is_none());
        check_flags(t, self.index, self.width)?;
        let pos = (self.index / self.width, self.index % self.width);
        self.index += 1;
        if self.index == self.total {
            self.index = 0;
        }
        Ok(pos)
    }
}

struct WinCore {
    width: usize,
    lb: LineBuffer,
    win: Window,
    out: Option<PixelToken>,
}

impl WinCore {
    fn new(width: usize, height: usize, side: usize, channels: usize) -> Result<Self> {
        let lb = LineBuffer::new(width, height, side, side, channels)?;
        let win = lb.window();
        Ok(WinCore { width, lb, win, out: None })
    }

    fn step(&mut self, f: impl FnOnce(&Window) -> [u16; 3]) {
        if self.out.is_none() && self.lb.output_ready() {
            let i = self.lb.emit(&mut self.win);
            let (sof, eol) = PixelToken::flags_for(i, self.width);
            self.out = Some(PixelToken { value: f(&self.win), sof, eol });
        }
    }
}

macro_rules! window_plumbing {
    () => {
        fn ready(&self) -> bool {
            self.core.lb.ready()
        }
        fn push(&mut self, t: PixelToken) -> Result<()> {
            self.core.lb.accept(&t)
        }
        fn output(&self) -> Option<&PixelToken> {
            self.core.out.as_ref()
        }
        fn take(&mut self) -> Option<PixelToken> {
            self.core.out.take()
        }
        fn peak_lines(&self) -> usize {
            self.core.lb.peak_lines()
        }
        fn line_capacity(&self) -> usize {
            self.core.lb.capacity_lines()
        }
    };
}

macro_rules! point_plumbing {
    () => {
        fn ready(&self) -> bool {
            self.pt.out.is_none()
        }
        fn ready_when_drained(&self) -> bool {
            true
        }
        fn step(&mut self) {}
        fn output(&self) -> Option<&PixelToken> {
            self.pt.out.as_ref()
        }
        fn take(&mut self) -> Option<PixelToken> {
            self.pt.out.take()
        }
    };
}

pub(crate) struct DpcStage {
    core: WinCore,
    threshold: u16,
    corrected: u64,
}

impl DpcStage {
    pub(crate) fn new(width: usize, height: usize, threshold: u16) -> Result<Self> {
        Ok(DpcStage { core: WinCore::new(width, height, 5, 1)?, threshold, corrected: 0 })
    }
}

impl Stage for DpcStage {
    fn kind(&self) -> StageKind {
        StageKind::Dpc
    }
    window_plumbing!();
    fn step(&mut self) {
        let (t, n) = (self.threshold, &mut self.corrected);
        self.core.step(|w| {
            if dpc_detect(w, t) {
                *n += 1;
                [dpc_correct(w), 0, 0]
            } else {
                [w.center(0) as u16, 0, 0]
            }
        });
    }
    fn report(&self, stats: &mut IspStats) {
        stats.dpc_corrected = Some(self.corrected);
    }
}

pub(crate) struct AwbStage {
    pt: Point,
    pattern: BayerPattern,
    gains: [GainQ8; 3],
    low: u16,
    high: u16,
    max: u16,
    stats: AwbStats,
}

impl AwbStage {
    pub(crate) fn new(
        width: usize,
        height: usize,
        pattern: BayerPattern,
        gains: [GainQ8; 3],
        low: u16,
        high: u16,
        max: u16,
    ) -> Self {
        AwbStage { pt: Point::new(width, height), pattern, gains, low, high, max, stats: AwbStats::default() }
    }
}

impl Stage for AwbStage {
    fn kind(&self) -> StageKind {
        StageKind::Awb
    }
    point_plumbing!();
    fn push(&mut self, t: PixelToken) -> Result<()> {
        let (y, x) = self.pt.accept(&t)?;
        let ch = self.pattern.color_at(y, x).channel();
        let v = t.value[0];
        self.stats.add(ch, v, self.low, self.high);
        self.pt.out = Some(PixelToken { value: [self.gains[ch].apply(v, self.max), 0, 0], ..t });
        Ok(())
    }
    fn report(&self, stats: &mut IspStats) {
        let next: std::result::Result<[GainQ8; 3], AwbError> = awb_gains(&self.stats);
        stats.awb = Some(AwbReport {
            applied: self.gains,
            stats: self.stats,
            means: self.stats.means(),
            next: next.ok(),
            error: next.err(),
        });
    }
}

pub(crate) struct DemosaicStage {
    core: WinCore,
    pattern: BayerPattern,
    max: u16,
}

impl DemosaicStage {
    pub(crate) fn new(width: usize, height: usize, pattern: BayerPattern, max: u16) -> Result<Self> {
        Ok(DemosaicStage { core: WinCore::new(width, height, 5, 1)?, pattern, max })
    }
}

impl Stage for DemosaicStage {
    fn kind(&self) -> StageKind {
        StageKind::Demosaic
    }
    window_plumbing!();
    fn step(&mut self) {
        let (p, max) = (self.pattern, self.max);
        self.core.step(|w| demosaic_pixel(w, p.color_at(w.y, w.x), max));
    }
}

pub(crate) struct NlmStage {
    core: WinCore,
    channels: usize,
    slider: NlmSlider,
    lut: NlmLut,
    weight_sum: u64,
    candidates: u64,
}

impl NlmStage {
    pub(crate) fn new(
        width: usize,
        height: usize,
        channels: usize,
        patch_radius: usize,
        search_radius: usize,
        lut: NlmLut,
    ) -> Result<Self> {
        let side = 2 * (patch_radius + search_radius) + 1;
        Ok(NlmStage {
            core: WinCore::new(width, height, side, channels)?,
            channels,
            slider: NlmSlider::new(patch_radius, search_radius, channels),
            lut,
            weight_sum: 0,
            candidates: 0,
        })
    }
}

impl Stage for NlmStage {
    fn kind(&self) -> StageKind {
        StageKind::Nlm
    }
    window_plumbing!();
    fn step(&mut self) {
        let (ch, lut, slider) = (self.channels, &self.lut, &mut self.slider);
        let (ws, n) = (&mut self.weight_sum, &mut self.candidates);
        self.core.step(|w| {
            slider.begin(w);
            let mut v = [0u16; 3];
            for (c, slot) in v.iter_mut().enumerate().take(ch) {
                let (out, den, cands) = slider.filter(w, c, lut);
                *slot = out;
                *ws += den;
                *n += cands;
            }
            v
        });
    }
    fn report(&self, stats: &mut IspStats) {
        let mean_weight = if self.candidates == 0 { 0.0 } else { self.weight_sum as f64 / self.candidates as f64 };
        stats.nlm = Some(NlmStats { h: self.lut.h, mean_weight, weight_sum: self.weight_sum, candidates: self.candidates });
    }
}

pub(crate) struct GammaStage {
    pt: Point,
    lut: GammaLut,
    channels: usize,
    bit_depth: u8,
    before: Vec<u64>,
    after: Vec<u64>,
}

impl GammaStage {
    pub(crate) fn new(width: usize, height: usize, channels: usize, bit_depth: u8, lut: GammaLut) -> Self {
        GammaStage { pt: Point::new(width, height), lut, channels, bit_depth, before: vec![0; 256], after: vec![0; 256] }
    }
}

/// Histogram bin of a sample on a 256-bin scale.
#[inline]
pub(crate) fn bin256(v: u16, bit_depth: u8) -> usize {
    if bit_depth >= 8 {
        (v >> (bit_depth - 8)) as usize
    } else {
        (v << (8 - bit_depth)) as usize
    }
}

impl Stage for GammaStage {
    fn kind(&self) -> StageKind {
        StageKind::Gamma
    }
    point_plumbing!();
    fn push(&mut self, t: PixelToken) -> Result<()> {
        self.pt.accept(&t)?;
        let mut out = t;
        for c in 0..self.channels {
            let v = t.value[c];
            let g = self.lut.apply(v);
            self.before[bin256(v, self.bit_depth)] += 1;
            self.after[bin256(g, self.bit_depth)] += 1;
            out.value[c] = g;
        }
        self.pt.out = Some(out);
        Ok(())
    }
    fn report(&self, stats: &mut IspStats) {
        stats.gamma_exponent = Some(self.lut.exponent);
        stats.gamma_hist_before = Some(self.before.clone());
        stats.gamma_hist_after = Some(self.after.clone());
    }
}

pub(crate) struct CscStage {
    pt: Point,
    matrix: CscMatrix,
    bit_depth: u8,
}

impl CscStage {
    pub(crate) fn new(width: usize, height: usize, matrix: CscMatrix, bit_depth: u8) -> Self {
        CscStage { pt: Point::new(width, height), matrix, bit_depth }
    }
}

impl Stage for CscStage {
    fn kind(&self) -> StageKind {
        StageKind::Csc
    }
    point_plumbing!();
    fn push(&mut self, t: PixelToken) -> Result<()> {
        self.pt.accept(&t)?;
        self.pt.out = Some(PixelToken { value: rgb_to_ycbcr(t.value, &self.matrix, self.bit_depth), ..t });
        Ok(())
    }
}

pub(crate) struct SharpenStage {
    core: WinCore,
    lambda: u8,
}

impl SharpenStage {
    pub(crate) fn new(width: usize, height: usize, lambda: u8) -> Result<Self> {
        Ok(SharpenStage { core: WinCore::new(width, height, 3, 3)?, lambda })
    }
}

impl Stage for SharpenStage {
    fn kind(&self) -> StageKind {
        StageKind::Sharpen
    }
    window_plumbing!();
    fn step(&mut self) {
        let lambda = self.lambda;
        self.core.step(|w| [sharpen_luma(w, lambda), w.center(1) as u16, w.center(2) as u16]);
    }
}

/// Rounds a sample of any depth to 8 bits.
#[inline]
pub(crate) fn to_8bit(v: u16, bit_depth: u8) -> u16 {
    match bit_depth {
        8 => v,
        d if d > 8 => (round_shift(v as i64, (d - 8) as u32) as u16).min(255),
        d => v << (8 - d),
    }
}
