use serde::{Deserialize, Serialize};

use super::awb::{AwbError, AwbStats};
use super::gamma::GammaLut;
use super::nlm::NlmLut;
use super::stage::{
    to_8bit, AwbStage, CscStage, DemosaicStage, DpcStage, GammaStage, NlmStage, SharpenStage, Stage,
};
use super::stream::{run_polled, run_threaded, Schedule, StreamReport};
use super::token::stream_from_frame;
use super::{BayerPattern, Frame, FrameFormat, IspConfig, IspError, PixelToken, Result};
use crate::fixed::{max_sample, GainQ8};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AwbReport {
    /// Gains applied to this frame.
    pub applied: [GainQ8; 3],
    pub stats: AwbStats,
    pub means: [Option<f64>; 3],
    /// Gains derived from this frame's statistics, if they were usable.
    pub next: Option<[GainQ8; 3]>,
    pub error: Option<AwbError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlmStats {
    pub h: f64,
    pub mean_weight: f64,
    pub weight_sum: u64,
    pub candidates: u64,
}

/// Per-frame statistics. Sections of disabled stages are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IspStats {
    pub frame_index: u64,
    pub config_revision: u64,
    pub width: usize,
    pub height: usize,
    pub dpc_corrected: Option<u64>,
    pub awb: Option<AwbReport>,
    pub nlm: Option<NlmStats>,
    pub gamma_exponent: Option<f64>,
    pub gamma_hist_before: Option<Vec<u64>>,
    pub gamma_hist_after: Option<Vec<u64>>,
    /// Mean 8-bit luma of the output.
    pub mean_luma: f64,
    pub luma_variance: f64,
    pub grid: usize,
    /// Row-major `grid x grid` regional luma means and variances.
    pub region_mean: Vec<f64>,
    pub region_variance: Vec<f64>,
}

/// State carried from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IspState {
    pub awb_gains: [GainQ8; 3],
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IspOutput {
    pub frame: Frame,
    pub stats: IspStats,
    pub report: StreamReport,
}

/// A configured pipeline for one sensor geometry. Each call to
/// [`IspPipeline::run_frame`] builds fresh stages from the configuration in
/// force at that frame's start, so a frame never sees two configurations.
#[derive(Debug, Clone)]
pub struct IspPipeline {
    config: IspConfig,
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: BayerPattern,
    state: IspState,
    gamma: GammaLut,
    nlm: NlmLut,
}

impl IspPipeline {
    pub fn new(config: IspConfig, width: usize, height: usize, bit_depth: u8, pattern: BayerPattern) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(IspError::InvalidConfig("frame must be at least 1x1".into()));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(IspError::InvalidConfig(format!("bit depth {bit_depth} out of range")));
        }
        Self::check(&config, bit_depth)?;
        let gamma = GammaLut::new(config.gamma.exponent, bit_depth)?;
        let nlm = NlmLut::new(config.nlm.h, config.nlm.patch_radius)?;
        let state = IspState { awb_gains: config.awb.gains, frames: 0 };
        Ok(IspPipeline { config, width, height, bit_depth, pattern, state, gamma, nlm })
    }

    fn check(config: &IspConfig, bit_depth: u8) -> Result<()> {
        config.validate()?;
        if config.awb.low > max_sample(bit_depth) {
            return Err(IspError::InvalidConfig(format!("awb.low: above the {bit_depth}-bit range")));
        }
        Ok(())
    }

    pub fn config(&self) -> &IspConfig {
        &self.config
    }

    pub fn state(&self) -> &IspState {
        &self.state
    }

    pub fn pattern(&self) -> BayerPattern {
        self.pattern
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Replaces the configuration from the next frame on. Tables are rebuilt
    /// only when their parameters change; new AWB gains also reset the
    /// running auto-white-balance state.
    pub fn set_config(&mut self, config: IspConfig) -> Result<()> {
        Self::check(&config, self.bit_depth)?;
        let gamma = if config.gamma.exponent != self.gamma.exponent {
            GammaLut::new(config.gamma.exponent, self.bit_depth)?
        } else {
            self.gamma.clone()
        };
        let nlm = if config.nlm.h != self.nlm.h || config.nlm.patch_radius != self.config.nlm.patch_radius {
            NlmLut::new(config.nlm.h, config.nlm.patch_radius)?
        } else {
            self.nlm.clone()
        };
        if config.awb.gains != self.config.awb.gains {
            self.state.awb_gains = config.awb.gains;
        }
        self.gamma = gamma;
        self.nlm = nlm;
        self.config = config;
        Ok(())
    }

    pub fn output_format(&self) -> FrameFormat {
        if self.config.csc.enabled {
            FrameFormat::YCbCr
        } else if self.config.demosaic.enabled {
            FrameFormat::Rgb
        } else {
            FrameFormat::Bayer
        }
    }

    fn output_depth(&self) -> u8 {
        if self.config.csc.enabled {
            8
        } else {
            self.bit_depth
        }
    }

    fn awb_gains_for_frame(&self) -> [GainQ8; 3] {
        if self.config.awb.auto {
            self.state.awb_gains
        } else {
            self.config.awb.gains
        }
    }

    /// The enabled stages, in pipeline order, ready for one frame.
    pub fn build_stages(&self) -> Result<Vec<Box<dyn Stage>>> {
        let c = &self.config;
        let (w, h, d) = (self.width, self.height, self.bit_depth);
        let max = max_sample(d);
        let mut stages: Vec<Box<dyn Stage>> = Vec::new();
        if c.dpc.enabled {
            stages.push(Box::new(DpcStage::new(w, h, c.dpc.threshold)?));
        }
        if c.awb.enabled {
            let gains = self.awb_gains_for_frame();
            stages.push(Box::new(AwbStage::new(w, h, self.pattern, gains, c.awb.low, c.awb.high, max)));
        }
        let mut channels = 1;
        if c.demosaic.enabled {
            stages.push(Box::new(DemosaicStage::new(w, h, self.pattern, max)?));
            channels = 3;
        }
        if c.nlm.enabled {
            let lut = self.nlm.clone();
            stages.push(Box::new(NlmStage::new(w, h, channels, c.nlm.patch_radius, c.nlm.search_radius, lut)?));
        }
        if c.gamma.enabled {
            stages.push(Box::new(GammaStage::new(w, h, channels, d, self.gamma.clone())));
        }
        if c.csc.enabled {
            stages.push(Box::new(CscStage::new(w, h, c.csc.matrix(), d)));
        }
        if c.sharpen.enabled {
            stages.push(Box::new(SharpenStage::new(w, h, c.sharpen.lambda)?));
        }
        Ok(stages)
    }

    pub fn run_frame(&mut self, frame: &Frame, schedule: &Schedule) -> Result<IspOutput> {
        self.run_frame_with(frame, schedule, |_| {})
    }

    /// Like [`IspPipeline::run_frame`], calling `on_token` with the index of
    /// every token as it leaves the pipeline.
    pub fn run_frame_with(
        &mut self,
        frame: &Frame,
        schedule: &Schedule,
        mut on_token: impl FnMut(usize),
    ) -> Result<IspOutput> {
        if frame.format != FrameFormat::Bayer || frame.width != self.width || frame.height != self.height {
            return Err(IspError::Geometry {
                expected: format!("{}x{} bayer", self.width, self.height),
                got: format!("{} {:?}", frame.dims_string(), frame.format),
            });
        }
        if frame.bit_depth != self.bit_depth {
            return Err(IspError::Geometry {
                expected: format!("{}-bit", self.bit_depth),
                got: format!("{}-bit", frame.bit_depth),
            });
        }
        frame.validate()?;
        let mut stages = self.build_stages()?;
        let input = stream_from_frame(frame);
        let format = self.output_format();
        let mut out = Frame::new(self.width, self.height, self.output_depth(), format);
        let ch = format.channels();
        let mut write = |i: usize, t: PixelToken| {
            out.data[i * ch..(i + 1) * ch].copy_from_slice(&t.value[..ch]);
            on_token(i);
        };
        let report = match schedule {
            Schedule::Polled => run_polled(&mut stages, &input, None, &mut write)?,
            Schedule::Stalled(s) => run_polled(&mut stages, &input, Some(s), &mut write)?,
            Schedule::Threaded => run_threaded(&mut stages, &input, &mut write)?,
        };

        let mut stats = IspStats {
            frame_index: self.state.frames,
            config_revision: self.config.revision,
            width: self.width,
            height: self.height,
            ..Default::default()
        };
        for s in &stages {
            s.report(&mut stats);
        }
        luma_stats(&out, self.config.stats.grid, &mut stats);
        if self.config.awb.enabled && self.config.awb.auto {
            if let Some(next) = stats.awb.as_ref().and_then(|a| a.next) {
                self.state.awb_gains = next;
            }
        }
        self.state.frames += 1;
        Ok(IspOutput { frame: out, stats, report })
    }
}

/// Runs one frame through a fresh pipeline.
pub fn run_pipeline(frame: &Frame, pattern: BayerPattern, config: &IspConfig) -> Result<IspOutput> {
    let mut p = IspPipeline::new(config.clone(), frame.width, frame.height, frame.bit_depth, pattern)?;
    p.run_frame(frame, &Schedule::Polled)
}

/// 8-bit luma of one output pixel.
pub(crate) fn pixel_luma(f: &Frame, y: usize, x: usize) -> u16 {
    match f.format {
        FrameFormat::YCbCr => f.get(y, x, 0),
        FrameFormat::Bayer => to_8bit(f.get(y, x, 0), f.bit_depth),
        FrameFormat::Rgb => {
            let [r, g, b] = [0, 1, 2].map(|c| to_8bit(f.get(y, x, c), f.bit_depth) as u32);
            ((77 * r + 150 * g + 29 * b + 128) >> 8) as u16
        }
    }
}

fn luma_stats(f: &Frame, grid: usize, stats: &mut IspStats) {
    let cells = grid * grid;
    let (rw, rh) = (f.width.div_ceil(grid), f.height.div_ceil(grid));
    let mut sum = vec![0f64; cells];
    let mut sq = vec![0f64; cells];
    let mut n = vec![0u64; cells];
    for y in 0..f.height {
        for x in 0..f.width {
            let v = pixel_luma(f, y, x) as f64;
            let r = (y / rh) * grid + x / rw;
            sum[r] += v;
            sq[r] += v * v;
            n[r] += 1;
        }
    }
    let total: f64 = sum.iter().sum();
    let total_sq: f64 = sq.iter().sum();
    let count = (f.width * f.height) as f64;
    stats.grid = grid;
    stats.mean_luma = total / count;
    stats.luma_variance = (total_sq / count - stats.mean_luma.powi(2)).max(0.0);
    stats.region_mean = (0..cells).map(|r| if n[r] == 0 { 0.0 } else { sum[r] / n[r] as f64 }).collect();
    stats.region_variance = (0..cells)
        .map(|r| if n[r] == 0 { 0.0 } else { (sq[r] / n[r] as f64 - (sum[r] / n[r] as f64).powi(2)).max(0.0) })
        .collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isp::StallConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_bayer(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, 8, |y, x| {
            let base = 40 + (x * 150 / w.max(1)) as i32 + if (y + x) % 2 == 0 { 20 } else { 0 };
            (base + rng.gen_range(-8..=8)).clamp(0, 255) as u16
        })
    }

    fn stuck_pixels(mut f: Frame) -> Frame {
        let (w, h) = (f.width, f.height);
        for &(y, x) in &[(h / 3, w / 3), (h / 2, w / 2 + 1), (2 * h / 3, w / 4)] {
            f.set(y, x, 0, 255);
        }
        f
    }

    #[test]
    fn all_disabled_is_passthrough() {
        let f = noisy_bayer(9, 7, 1);
        let out = run_pipeline(&f, BayerPattern::RGGB, &IspConfig::all_disabled()).unwrap();
        assert_eq!(out.frame.format, FrameFormat::Bayer);
        assert_eq!(out.frame.data, f.data);
        assert_eq!(out.report.links.len(), 1);
    }

    #[test]
    fn default_pipeline_emits_ycbcr_in_studio_range() {
        let f = noisy_bayer(16, 12, 2);
        let out = run_pipeline(&f, BayerPattern::GRBG, &IspConfig::default()).unwrap();
        assert_eq!(out.frame.format, FrameFormat::YCbCr);
        for px in out.frame.data.chunks(3) {
            assert!((16..=235).contains(&px[0]));
            assert!((16..=240).contains(&px[1]) && (16..=240).contains(&px[2]));
        }
        assert_eq!(out.report.links.len(), 8);
        assert!(out.report.links.iter().all(|l| l.transfers == 16 * 12));
    }

    #[test]
    fn schedules_agree() {
        let f = stuck_pixels(noisy_bayer(20, 14, 3));
        let cfg = IspConfig::default();
        let mut base = IspPipeline::new(cfg.clone(), 20, 14, 8, BayerPattern::BGGR).unwrap();
        let reference = base.run_frame(&f, &Schedule::Polled).unwrap();
        for schedule in [
            Schedule::Threaded,
            Schedule::Stalled(StallConfig::uniform(9, 0.3)),
            Schedule::Stalled(StallConfig { seed: 4, source: 0.9, stage: 0.0, sink: 0.5 }),
        ] {
            let mut p = IspPipeline::new(cfg.clone(), 20, 14, 8, BayerPattern::BGGR).unwrap();
            let out = p.run_frame(&f, &schedule).unwrap();
            assert_eq!(out.frame, reference.frame, "{schedule:?}");
            assert_eq!(out.stats, reference.stats, "{schedule:?}");
        }
    }

    #[test]
    fn line_buffers_stay_within_window_height() {
        let f = noisy_bayer(24, 18, 4);
        let out = run_pipeline(&f, BayerPattern::RGGB, &IspConfig::default()).unwrap();
        for &(peak, cap) in &out.report.lines {
            assert!(peak <= cap, "{peak} > {cap}");
        }
        // dpc, demosaic, nlm, sharpen
        assert_eq!(out.report.lines.iter().filter(|l| l.1 > 0).count(), 4);
    }

    #[test]
    fn dpc_counts_stuck_pixels() {
        let f = stuck_pixels(Frame::from_fn(24, 24, 8, |_, _| 90));
        let mut cfg = IspConfig::all_disabled();
        cfg.dpc.enabled = true;
        let out = run_pipeline(&f, BayerPattern::RGGB, &cfg).unwrap();
        assert_eq!(out.stats.dpc_corrected, Some(3));
        assert!(out.frame.data.iter().all(|&v| v == 90));
    }

    #[test]
    fn awb_gains_take_effect_on_the_next_frame() {
        // red twice as bright as green and blue
        let f = Frame::from_fn(8, 8, 8, |y, x| if y % 2 == 0 && x % 2 == 0 { 160 } else { 80 });
        let mut cfg = IspConfig::all_disabled();
        cfg.awb.enabled = true;
        let mut p = IspPipeline::new(cfg, 8, 8, 8, BayerPattern::RGGB).unwrap();
        let first = p.run_frame(&f, &Schedule::Polled).unwrap();
        assert_eq!(first.frame.data, f.data);
        assert_eq!(first.stats.awb.as_ref().unwrap().next, Some([GainQ8(128), GainQ8(256), GainQ8(256)]));
        let second = p.run_frame(&f, &Schedule::Polled).unwrap();
        assert!(second.frame.data.iter().all(|&v| v == 80));
        assert_eq!(second.stats.awb.unwrap().applied[0], GainQ8(128));
    }

    #[test]
    fn excluded_frame_keeps_previous_gains() {
        let mut cfg = IspConfig::all_disabled();
        cfg.awb.enabled = true;
        cfg.awb.gains = [GainQ8(300), GainQ8(256), GainQ8(200)];
        let mut p = IspPipeline::new(cfg, 4, 4, 8, BayerPattern::RGGB).unwrap();
        let out = p.run_frame(&Frame::from_fn(4, 4, 8, |_, _| 255), &Schedule::Polled).unwrap();
        assert_eq!(out.stats.awb.unwrap().error, Some(AwbError::AllPixelsExcluded));
        assert_eq!(p.state().awb_gains, [GainQ8(300), GainQ8(256), GainQ8(200)]);
    }

    #[test]
    fn manual_gains_ignore_statistics() {
        let f = Frame::from_fn(4, 4, 8, |y, x| if y % 2 == 0 && x % 2 == 0 { 160 } else { 80 });
        let mut cfg = IspConfig::all_disabled();
        cfg.awb.enabled = true;
        cfg.awb.auto = false;
        cfg.awb.gains = [GainQ8(512), GainQ8::ONE, GainQ8::ONE];
        let mut p = IspPipeline::new(cfg, 4, 4, 8, BayerPattern::RGGB).unwrap();
        p.run_frame(&f, &Schedule::Polled).unwrap();
        let out = p.run_frame(&f, &Schedule::Polled).unwrap();
        assert_eq!(out.frame.get(0, 0, 0), 255);
        assert_eq!(out.frame.get(0, 1, 0), 80);
    }

    #[test]
    fn geometry_and_framing_are_checked() {
        let mut p = IspPipeline::new(IspConfig::default(), 8, 8, 8, BayerPattern::RGGB).unwrap();
        assert!(matches!(p.run_frame(&noisy_bayer(8, 7, 0), &Schedule::Polled), Err(IspError::Geometry { .. })));
        let mut stages = p.build_stages().unwrap();
        let mut input = stream_from_frame(&noisy_bayer(8, 8, 0));
        input[9].eol = true;
        let r = run_polled(&mut stages, &input, None, |_, _| {});
        assert!(matches!(r, Err(IspError::Framing { index: 9, .. })));
        let mut stages = p.build_stages().unwrap();
        assert!(matches!(run_threaded(&mut stages, &input, |_, _| {}), Err(IspError::Framing { index: 9, .. })));
    }

    #[test]
    fn luma_grid_statistics() {
        let f = Frame::from_fn(8, 8, 8, |y, x| if y < 4 && x < 4 { 200 } else { 100 });
        let mut cfg = IspConfig::all_disabled();
        cfg.stats.grid = 2;
        let out = run_pipeline(&f, BayerPattern::RGGB, &cfg).unwrap();
        assert_eq!(out.stats.region_mean, vec![200.0, 100.0, 100.0, 100.0]);
        assert_eq!(out.stats.region_variance, vec![0.0; 4]);
        assert_eq!(out.stats.mean_luma, 125.0);
        assert_eq!(out.stats.luma_variance, 1875.0);
    }

    #[test]
    fn gamma_histograms_count_every_sample() {
        let f = noisy_bayer(10, 10, 5);
        let out = run_pipeline(&f, BayerPattern::RGGB, &IspConfig::default()).unwrap();
        assert_eq!(out.stats.gamma_hist_before.unwrap().iter().sum::<u64>(), 300);
        assert_eq!(out.stats.gamma_hist_after.unwrap().iter().sum::<u64>(), 300);
        let nlm = out.stats.nlm.unwrap();
        assert_eq!(nlm.candidates, 300 * 49);
        assert!(nlm.mean_weight > 0.0 && nlm.mean_weight <= 255.0);
    }

    #[test]
    fn ten_bit_input_is_supported() {
        let f = Frame::from_fn(12, 10, 10, |y, x| ((y * 12 + x) * 8) as u16);
        let out = run_pipeline(&f, BayerPattern::GBRG, &IspConfig::default()).unwrap();
        assert_eq!(out.frame.bit_depth, 8);
        let mut cfg = IspConfig::default();
        cfg.csc.enabled = false;
        cfg.sharpen.enabled = false;
        let rgb = run_pipeline(&f, BayerPattern::GBRG, &cfg).unwrap();
        assert_eq!((rgb.frame.format, rgb.frame.bit_depth), (FrameFormat::Rgb, 10));
    }
}
