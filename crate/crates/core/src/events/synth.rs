//! Synthetic moving-bar event data.
//!
//! A bright vertical bar drifts left or right across the sensor. Columns the
//! bar enters emit ON events, columns it leaves emit OFF events, and a few
//! uniformly scattered noise events are mixed in.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DvsEvent, Polarity, SensorDims};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovingBarConfig {
    pub sensor: SensorDims,
    pub window_us: u64,
    pub bar_width: u32,
    /// Travel per window in pixels, sampled uniformly from this range.
    pub speed: [f64; 2],
    pub substeps: u32,
    /// Probability that a pixel on a moving edge actually fires.
    pub fire_prob: f64,
    pub noise_events: u32,
}

impl Default for MovingBarConfig {
    fn default() -> Self {
        MovingBarConfig {
            sensor: SensorDims::new(16, 16),
            window_us: 100_000,
            bar_width: 2,
            speed: [4.0, 8.0],
            substeps: 40,
            fire_prob: 0.9,
            noise_events: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarDirection {
    Left = 0,
    Right = 1,
}

impl BarDirection {
    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> BarDirection {
        if label == 0 {
            BarDirection::Left
        } else {
            BarDirection::Right
        }
    }
}

/// Events of one bar pass inside `[start, start + window_us)`, time-sorted.
pub fn moving_bar_sample<R: Rng>(cfg: &MovingBarConfig, dir: BarDirection, start: u64, rng: &mut R) -> Vec<DvsEvent> {
    let w = cfg.sensor.width as f64;
    let h = cfg.sensor.height;
    let bar = cfg.bar_width as f64;
    let travel = rng.gen_range(cfg.speed[0]..=cfg.speed[1]).min(w - bar - 1.0).max(1.0);
    let span = (w - bar - travel).max(0.0);
    let offset = rng.gen_range(0.0..=span);
    let (x0, sign) = match dir {
        BarDirection::Right => (offset, 1.0),
        BarDirection::Left => (offset + travel, -1.0),
    };
    let rows = rng.gen_range(h / 2..=h);
    let y0 = rng.gen_range(0..=h - rows);

    let columns = |pos: f64| {
        let a = pos.floor() as i64;
        (a..a + cfg.bar_width as i64).filter(|&c| c >= 0 && c < cfg.sensor.width as i64)
    };
    let step_us = cfg.window_us / cfg.substeps as u64;
    let mut events = Vec::new();
    let mut prev: Vec<i64> = columns(x0).collect();
    for s in 1..=cfg.substeps {
        let pos = x0 + sign * travel * s as f64 / cfg.substeps as f64;
        let cur: Vec<i64> = columns(pos).collect();
        let base = start + (s as u64 - 1) * step_us;
        for (set_a, set_b, pol) in [(&cur, &prev, Polarity::On), (&prev, &cur, Polarity::Off)] {
            for &c in set_a.iter().filter(|c| !set_b.contains(c)) {
                for y in y0..y0 + rows {
                    if rng.gen_bool(cfg.fire_prob) {
                        let t = base + rng.gen_range(0..step_us.max(1));
                        events.push(DvsEvent::new(t, c as u32, y, pol));
                    }
                }
            }
        }
        prev = cur;
    }
    for _ in 0..cfg.noise_events {
        let t = start + rng.gen_range(0..cfg.window_us);
        let x = rng.gen_range(0..cfg.sensor.width);
        let y = rng.gen_range(0..h);
        let p = if rng.gen_bool(0.5) { Polarity::On } else { Polarity::Off };
        events.push(DvsEvent::new(t, x, y, p));
    }
    events.sort_by_key(|e| e.t);
    events
}

/// A labeled stream: sample `i` occupies `[i * window_us, (i + 1) * window_us)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub sensor: SensorDims,
    pub window_us: u64,
    pub events: Vec<DvsEvent>,
    pub labels: Vec<u8>,
}

impl LabeledStream {
    pub fn span_end(&self) -> u64 {
        self.labels.len() as u64 * self.window_us
    }
}

pub fn moving_bar_dataset(cfg: &MovingBarConfig, samples: usize, seed: u64) -> LabeledStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let dir = if rng.gen_bool(0.5) { BarDirection::Right } else { BarDirection::Left };
        labels.push(dir.label());
        events.extend(moving_bar_sample(cfg, dir, i as u64 * cfg.window_us, &mut rng));
    }
    LabeledStream { sensor: cfg.sensor, window_us: cfg.window_us, events, labels }
}
