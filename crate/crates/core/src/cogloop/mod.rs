//! The closed loop between the event path and the image pipeline.
//!
//! For every RGB frame the event window that best overlaps its exposure is
//! voxelized and run through the spiking network. Regional event activity
//! and the frame statistics go through a rule-based policy, which may emit
//! an [`NpuDirective`]. Directives travel over an ordered channel and are
//! applied to the ISP configuration only at the next start of frame.

mod directive;
mod policy;
mod runner;
mod scenario;

pub use directive::{apply_directive, DirectiveQueue, DirectiveRecord, NpuDirective};
pub use policy::{derive_directive, Policy, PolicyConfig, PolicyState};
pub use runner::{run_closed_loop, run_open_loop, FrameRecord, LoopInput, LoopOutput};
pub use scenario::{
    demo_scene, load_scenario, prepare_scenario, run_scenario, write_demo_scenario, DemoOptions, PreparedScenario, Scenario,
    ScenarioFrame, DEMO_BRIGHT, DEMO_DARK,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventError, EventWindow, VoxelGrid};
use crate::imgio::IoError;
use crate::isp::IspError;
use crate::snn::SnnError;

#[derive(Debug, Error)]
pub enum CogError {
    #[error("no event window overlaps the exposure [{t0}, {t1})")]
    NoOverlap { t0: u64, t1: u64 },
    #[error("event windows are not sorted by start time")]
    UnsortedWindows,
    #[error("invalid directive: {0}")]
    InvalidDirective(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("NPU worker: {0}")]
    Worker(String),
    #[error(transparent)]
    Isp(#[from] IspError),
    #[error(transparent)]
    Events(#[from] EventError),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = CogError> = std::result::Result<T, E>;

/// An RGB frame matched to the event window it overlaps most.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAlignment {
    /// Exposure interval `[t0, t1)` in µs.
    pub exposure: (u64, u64),
    /// Index of the matched window.
    pub window: usize,
    pub overlap: u64,
}

fn overlap(a: (u64, u64), b: (u64, u64)) -> u64 {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Picks the window with the largest overlap with `[t0, t1)`; ties go to the
/// earlier window.
pub fn align_window(exposure: (u64, u64), windows: &[EventWindow]) -> Result<FrameAlignment> {
    if windows.windows(2).any(|w| w[1].start < w[0].start) {
        return Err(CogError::UnsortedWindows);
    }
    let mut best: Option<(usize, u64)> = None;
    for (i, w) in windows.iter().enumerate() {
        let o = overlap(exposure, (w.start, w.end()));
        if o > 0 && best.map_or(true, |(_, b)| o > b) {
            best = Some((i, o));
        }
    }
    match best {
        Some((window, overlap)) => Ok(FrameAlignment { exposure, window, overlap }),
        None => Err(CogError::NoOverlap { t0: exposure.0, t1: exposure.1 }),
    }
}

/// Per-region event rates over one window, in set voxel cells per µs.
///
/// Regions are `ceil(H / G) x ceil(W / G)` tiles in raster order, so the last
/// row and column of regions may be smaller (or empty when G does not tile
/// the sensor evenly). The same tiling is used for the ISP luma statistics,
/// so region `r` of both maps covers the same part of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityMap {
    pub grid: usize,
    pub duration_us: u64,
    pub counts: Vec<u64>,
    pub rates: Vec<f64>,
}

impl ActivityMap {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean rate over all regions.
    pub fn mean_rate(&self) -> f64 {
        if self.rates.is_empty() {
            0.0
        } else {
            self.rates.iter().sum::<f64>() / self.rates.len() as f64
        }
    }
}

/// Region index of pixel `(y, x)` in a `g x g` tiling of a `height x width` sensor.
pub fn region_of(y: usize, x: usize, height: usize, width: usize, g: usize) -> usize {
    (y / height.div_ceil(g)) * g + x / width.div_ceil(g)
}

/// Counts set cells of `grid` per region and divides by the window length.
pub fn compute_region_activity(grid: &VoxelGrid, g: usize, duration_us: u64) -> ActivityMap {
    let g = g.max(1);
    let mut counts = vec![0u64; g * g];
    let plane = grid.height * grid.width;
    for (i, &cell) in grid.data.iter().enumerate() {
        if cell != 0 {
            let pix = i % plane;
            counts[region_of(pix / grid.width, pix % grid.width, grid.height, grid.width, g)] += 1;
        }
    }
    let rates = counts.iter().map(|&c| if duration_us == 0 { 0.0 } else { c as f64 / duration_us as f64 }).collect();
    ActivityMap { grid: g, duration_us, counts, rates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{voxelize, DvsEvent, Polarity, SensorDims};
    use proptest::prelude::*;

    fn tiles(step: u64, end: u64) -> Vec<EventWindow> {
        (0..end / step).map(|k| EventWindow::new(k * step, step)).collect()
    }

    #[test]
    fn alignment_picks_largest_overlap() {
        let w = tiles(10, 100);
        let a = align_window((23, 33), &w).unwrap();
        assert_eq!((w[a.window].start, a.overlap), (20, 7));
        assert_eq!(w[align_window((20, 30), &w).unwrap().window].start, 20);
    }

    #[test]
    fn alignment_ties_go_to_the_earlier_window() {
        let w = tiles(10, 100);
        let a = align_window((25, 35), &w).unwrap();
        assert_eq!((w[a.window].start, a.overlap), (20, 5));
    }

    #[test]
    fn alignment_errors() {
        let w = tiles(10, 100);
        assert!(matches!(align_window((100, 120), &w), Err(CogError::NoOverlap { t0: 100, t1: 120 })));
        assert!(matches!(align_window((30, 30), &w), Err(CogError::NoOverlap { .. })));
        let mut rev = w.clone();
        rev.reverse();
        assert!(matches!(align_window((5, 6), &rev), Err(CogError::UnsortedWindows)));
    }

    #[test]
    fn empty_grid_has_zero_activity() {
        let a = compute_region_activity(&VoxelGrid::zeros(5, 16, 16), 4, 1000);
        assert_eq!(a.counts, vec![0; 16]);
        assert!(a.rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn events_in_one_region_light_one_cell() {
        let dims = SensorDims::new(16, 16);
        let mut win = EventWindow::new(0, 1000);
        for (i, (x, y)) in [(0, 0), (1, 2), (3, 3), (2, 1)].into_iter().enumerate() {
            win.events.push(DvsEvent::new(i as u64 * 100, x, y, Polarity::On));
        }
        let a = compute_region_activity(&voxelize(&win, 5, dims).unwrap(), 4, 1000);
        assert_eq!(a.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(a.counts[0], 4);
        assert_eq!(a.rates[0], 4.0 / 1000.0);
    }

    proptest! {
        #[test]
        fn activity_matches_regional_recount(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, g in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut grid = VoxelGrid::zeros(3, h, w);
            for c in grid.data.iter_mut() {
                *c = rng.gen_bool(0.2) as u8;
            }
            let a = compute_region_activity(&grid, g, 500);
            // brute force: walk every region's rectangle
            let (rh, rw) = (h.div_ceil(g), w.div_ceil(g));
            for ry in 0..g {
                for rx in 0..g {
                    let mut n = 0u64;
                    for b in 0..3 {
                        for p in 0..2 {
                            for y in ry * rh..((ry + 1) * rh).min(h) {
                                for x in rx * rw..((rx + 1) * rw).min(w) {
                                    n += grid.get(b, p, y, x) as u64;
                                }
                            }
                        }
                    }
                    prop_assert_eq!(a.counts[ry * g + rx], n);
                }
            }
            prop_assert_eq!(a.total_count() as usize, grid.count_set());
        }
    }
}
