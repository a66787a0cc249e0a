use serde::{Deserialize, Serialize};

use super::{ActivityMap, NpuDirective};
use crate::isp::{IspConfig, IspStats};

/// Thresholds of the directive policy. Luma is 8-bit output luma, activity is
/// in set voxel cells per µs per region and variance in squared luma units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Below this mean luma the gamma exponent is raised.
    pub l_low: f64,
    /// Above this mean luma the gamma exponent is lowered.
    pub l_high: f64,
    pub gamma_step: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Frames that must pass before a rule may push in the opposite direction.
    pub hysteresis_frames: u64,
    /// Regions per side; must match the ISP statistics grid.
    pub grid: usize,
    /// A region at or above this rate with high luma variance keeps detail.
    pub activity_high: f64,
    /// Mean regional rate below which (but above zero) the scene counts as calm.
    pub activity_low: f64,
    pub variance_high: f64,
    pub nlm_step: f64,
    pub nlm_min: f64,
    pub nlm_max: f64,
    /// Never forward the AWB block's gains.
    pub freeze_awb: bool,
    /// Forward AWB gains only when one differs from the configured gain by more than this (U4.8 units).
    pub awb_deadband: u16,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            l_low: 60.0,
            l_high: 190.0,
            gamma_step: 0.2,
            gamma_min: 1.0,
            gamma_max: 4.0,
            hysteresis_frames: 5,
            grid: 4,
            activity_high: 2e-4,
            activity_low: 2e-5,
            variance_high: 300.0,
            nlm_step: 2.0,
            nlm_min: 2.0,
            nlm_max: 16.0,
            freeze_awb: false,
            awb_deadband: 8,
        }
    }
}

impl PolicyConfig {
    /// First violated invariant as `(json path, message)`, relative to the policy section.
    pub fn violation(&self) -> Option<(String, String)> {
        let v = |p: &str, m: &str| Some((p.to_string(), m.to_string()));
        let finite = [
            ("l_low", self.l_low),
            ("l_high", self.l_high),
            ("gamma_step", self.gamma_step),
            ("gamma_min", self.gamma_min),
            ("gamma_max", self.gamma_max),
            ("activity_high", self.activity_high),
            ("activity_low", self.activity_low),
            ("variance_high", self.variance_high),
            ("nlm_step", self.nlm_step),
            ("nlm_min", self.nlm_min),
            ("nlm_max", self.nlm_max),
        ];
        for (name, x) in finite {
            if !x.is_finite() || x < 0.0 {
                return v(name, "must be a finite non-negative number");
            }
        }
        if self.l_low >= self.l_high {
            return v("l_low", "must be below l_high");
        }
        if self.gamma_min <= 0.0 || self.gamma_min > self.gamma_max {
            return v("gamma_min", "must be positive and at most gamma_max");
        }
        if self.nlm_min <= 0.0 || self.nlm_min > self.nlm_max {
            return v("nlm_min", "must be positive and at most nlm_max");
        }
        if self.activity_low > self.activity_high {
            return v("activity_low", "must not exceed activity_high");
        }
        if self.grid == 0 {
            return v("grid", "must be at least 1");
        }
        None
    }
}

/// What a rule did last: direction and frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyState {
    pub gamma: Option<(i8, u64)>,
    pub nlm: Option<(i8, u64)>,
}

fn permitted(last: Option<(i8, u64)>, dir: i8, frame: u64, k: u64) -> bool {
    match last {
        Some((d, f)) if d != dir => frame >= f + k,
        _ => true,
    }
}

/// Evaluates the policy for the statistics of `frame`.
///
/// * Mean luma below `l_low` raises the gamma exponent by `gamma_step`,
///   above `l_high` lowers it, clamped to `[gamma_min, gamma_max]`.
/// * A region with high activity and high luma variance lowers the NLM
///   strength by `nlm_step` and points the ROI at that region. A calm but
///   not silent scene raises it. A stream with no events leaves it alone.
/// * The gains the AWB block computed are forwarded when they move beyond
///   the deadband, unless frozen.
///
/// A rule never reverses the direction it last pushed in until
/// `hysteresis_frames` frames have passed, and a directive is emitted only
/// when some value actually changes.
pub fn derive_directive(
    activity: &ActivityMap,
    stats: &IspStats,
    current: &IspConfig,
    policy: &PolicyConfig,
    state: &mut PolicyState,
    frame: u64,
    t_us: u64,
) -> Option<NpuDirective> {
    let mut d = NpuDirective { t_us, ..Default::default() };
    let k = policy.hysteresis_frames;

    let luma_dir = if stats.mean_luma < policy.l_low {
        1
    } else if stats.mean_luma > policy.l_high {
        -1
    } else {
        0
    };
    if current.gamma.enabled && luma_dir != 0 && permitted(state.gamma, luma_dir, frame, k) {
        let now = current.gamma.exponent;
        let next = tidy(now + luma_dir as f64 * policy.gamma_step).clamp(policy.gamma_min, policy.gamma_max);
        if next != now {
            d.gamma = Some(next);
            state.gamma = Some((luma_dir, frame));
        }
    }

    if current.nlm.enabled && activity.total_count() > 0 {
        let hot = (0..activity.rates.len())
            .filter(|&r| {
                activity.rates[r] >= policy.activity_high
                    && stats.region_variance.get(r).is_some_and(|&v| v >= policy.variance_high)
            })
            .max_by(|&a, &b| activity.rates[a].total_cmp(&activity.rates[b]).then(b.cmp(&a)));
        let (dir, roi) = match hot {
            Some(r) => (-1, Some(r)),
            None if activity.mean_rate() < policy.activity_low => (1, None),
            None => (0, None),
        };
        if dir != 0 && permitted(state.nlm, dir, frame, k) {
            let now = current.nlm.h;
            let next = tidy(now + dir as f64 * policy.nlm_step).clamp(policy.nlm_min, policy.nlm_max);
            if next != now {
                d.nlm_strength = Some(next);
                state.nlm = Some((dir, frame));
                if let Some(r) = roi {
                    d.roi = region_rect(r, activity.grid, stats);
                }
            }
        }
    }

    if !policy.freeze_awb && current.awb.enabled {
        if let Some(next) = stats.awb.as_ref().and_then(|a| a.next) {
            let moved = next.iter().zip(&current.awb.gains).any(|(a, b)| a.0.abs_diff(b.0) > policy.awb_deadband);
            if moved {
                d.awb_gains = Some(next);
            }
        }
    }

    (!d.is_empty()).then_some(d)
}

/// Rounds to 1e-9 so repeated steps land on the values a person would write
/// in a config, not on their binary neighbours.
fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Sensor rectangle `[x, y, w, h]` of region `r`, from the frame size in the stats.
fn region_rect(r: usize, g: usize, stats: &IspStats) -> Option<[u32; 4]> {
    let (w, h) = (stats.width, stats.height);
    let (rw, rh) = (w.div_ceil(g), h.div_ceil(g));
    let (x0, y0) = ((r % g) * rw, (r / g) * rh);
    if x0 >= w || y0 >= h {
        return None;
    }
    Some([x0 as u32, y0 as u32, rw.min(w - x0) as u32, rh.min(h - y0) as u32])
}

/// [`derive_directive`] with its hysteresis state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    pub config: PolicyConfig,
    pub state: PolicyState,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Self {
        Policy { config, state: PolicyState::default() }
    }

    pub fn derive(
        &mut self,
        activity: &ActivityMap,
        stats: &IspStats,
        current: &IspConfig,
        frame: u64,
        t_us: u64,
    ) -> Option<NpuDirective> {
        derive_directive(activity, stats, current, &self.config, &mut self.state, frame, t_us)
    }
}
