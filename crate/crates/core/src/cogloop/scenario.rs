use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_closed_loop, CogError, LoopInput, LoopOutput, PolicyConfig, Result};
use crate::events::synth::{moving_bar_dataset, MovingBarConfig};
use crate::events::{load_events, save_events, DvsEvent, Polarity, SensorDims};
use crate::imgio::{load_bayer, load_config, save_bayer, save_config, AppConfig, FrameMeta};
use crate::isp::{BayerPattern, Frame};
use crate::snn::{load_checkpoint, save_checkpoint, SpikingNet};

/// A replayable closed-loop run. Relative paths are resolved against the
/// directory holding the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    /// Event file; absent means no events at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// Event sensor size, needed for CSV event files. Defaults to the
    /// configured synthetic sensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_sensor: Option<SensorDims>,
    pub frames: Vec<ScenarioFrame>,
    /// Period of back-to-back frames without exposure metadata. Defaults to
    /// `run.frame_interval_us` of the configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_interval_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    /// Replaces the configuration's policy section.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyConfig>,
    /// Trained network; absent means a network initialized from `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

fn schema_v1() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFrame {
    pub path: PathBuf,
    /// Overrides the sidecar's exposure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<[u64; 2]>,
}

/// Reads a scenario and makes its paths absolute.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| CogError::Scenario(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut s: Scenario = serde_path_to_error::deserialize(de)
        .map_err(|e| CogError::Scenario(format!("{}: at {}: {}", path.display(), e.path(), e.inner())))?;
    if s.schema_version != 1 {
        return Err(CogError::Scenario(format!("unsupported schema_version {}", s.schema_version)));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    for p in [&mut s.events, &mut s.config, &mut s.checkpoint].into_iter().flatten() {
        fix(p);
    }
    s.frames.iter_mut().for_each(|f| fix(&mut f.path));
    Ok(s)
}

/// A scenario with everything loaded from disk.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: AppConfig,
    pub sensor: SensorDims,
    pub events: Vec<DvsEvent>,
    pub frames: Vec<(Frame, (u64, u64))>,
    pub pattern: BayerPattern,
    pub net: SpikingNet,
}

impl PreparedScenario {
    pub fn input(&self) -> LoopInput<'_> {
        LoopInput {
            sensor: self.sensor,
            events: &self.events,
            frames: &self.frames,
            pattern: self.pattern,
            net: &self.net,
            isp: self.config.isp(),
            policy: self.config.policy.clone(),
            window_us: self.config.snn.data.window_us,
            bins: self.config.snn.bins,
            schedule: self.config.run.schedule.schedule(),
        }
    }
}

pub fn prepare_scenario(s: &Scenario) -> Result<PreparedScenario> {
    let mut config = match &s.config {
        Some(p) => load_config(p)?,
        None => AppConfig::default(),
    };
    if let Some(p) = &s.policy {
        config.policy = p.clone();
    }
    if let Some(seed) = s.seed {
        config.run.seed = seed;
    }
    if let Some(w) = s.window_us {
        config.snn.data.window_us = w;
    }
    if let Some(b) = s.bins {
        config.snn.bins = b;
    }
    if let Some(f) = s.frame_interval_us {
        config.run.frame_interval_us = f;
    }
    config.validate()?;

    let (sensor, events) = match &s.events {
        Some(p) => load_events(p, s.event_sensor)?,
        None => (s.event_sensor.unwrap_or(config.snn.data.sensor), Vec::new()),
    };
    let net = match &s.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => SpikingNet::from_spec(&config.snn.net, config.run.seed)?,
    };
    if net.spec.input != [sensor.height as usize, sensor.width as usize] {
        return Err(CogError::Scenario(format!(
            "network input {:?} does not match the {}x{} event sensor",
            net.spec.input, sensor.width, sensor.height
        )));
    }

    let period = config.run.frame_interval_us;
    let mut frames = Vec::with_capacity(s.frames.len());
    let mut pattern = None;
    for (i, sf) in s.frames.iter().enumerate() {
        let (frame, meta) = load_bayer(&sf.path)?;
        if *pattern.get_or_insert(meta.bayer_pattern) != meta.bayer_pattern {
            return Err(CogError::Scenario(format!("{}: Bayer pattern differs from frame 0", sf.path.display())));
        }
        let [t0, t1] = sf.exposure.or(meta.exposure).unwrap_or([i as u64 * period, (i as u64 + 1) * period]);
        frames.push((frame, (t0, t1)));
    }
    let pattern = pattern.ok_or_else(|| CogError::Scenario("no frames".into()))?;
    Ok(PreparedScenario { config, sensor, events, frames, pattern, net })
}

pub fn run_scenario(s: &Scenario) -> Result<LoopOutput> {
    let prepared = prepare_scenario(s)?;
    run_closed_loop(&prepared.input())
}

/// Shape of a generated demo scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// First frame after the illumination drop; `None` keeps the light steady.
    pub darken_at: Option<usize>,
    /// Include the moving-bar event stream.
    pub events: bool,
    pub seed: u64,
    /// Saved as `net.ckpt` and used by the scenario; otherwise the network
    /// is initialized from the seed.
    pub net: Option<SpikingNet>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions { width: 64, height: 64, frames: 12, darken_at: Some(4), events: true, seed: 7, net: None }
    }
}

impl DemoOptions {
    /// Steady light and no events: nothing for the policy to react to.
    pub fn quiescent() -> Self {
        DemoOptions { darken_at: None, events: false, ..Default::default() }
    }
}

/// Raw level of the demo scene under normal light.
pub const DEMO_BRIGHT: f64 = 1.0;
/// Relative light level after the drop.
pub const DEMO_DARK: f64 = 0.06;

/// A grey 8-bit Bayer test scene: a diagonal ramp with a soft disc,
/// scaled by the relative light level `light`.
pub fn demo_scene(width: usize, height: usize, light: f64) -> Frame {
    let (cx, cy, r) = (width as f64 * 0.6, height as f64 * 0.4, width.min(height) as f64 * 0.25);
    Frame::from_fn(width, height, 8, |y, x| {
        let ramp = 40.0 + 40.0 * (x + y) as f64 / (width + height) as f64;
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        let disc = 30.0 * (1.0 - (d / r).min(1.0));
        ((ramp + disc) * light).round().clamp(0.0, 255.0) as u16
    })
}

/// Writes frames, sidecars, events, configuration and `scenario.json` into
/// `dir` and returns the scenario path.
pub fn write_demo_scenario(dir: &Path, opts: &DemoOptions) -> Result<PathBuf> {
    let config = AppConfig::default();
    let period = config.run.frame_interval_us;
    fs::create_dir_all(dir.join("frames")).map_err(crate::imgio::IoError::from)?;
    let mut frames = Vec::new();
    for i in 0..opts.frames {
        let dark = opts.darken_at.is_some_and(|s| i >= s);
        let frame = demo_scene(opts.width, opts.height, if dark { DEMO_DARK } else { DEMO_BRIGHT });
        let meta = FrameMeta {
            width: opts.width,
            height: opts.height,
            bit_depth: 8,
            bayer_pattern: BayerPattern::RGGB,
            exposure: Some([i as u64 * period, i as u64 * period + period / 2]),
        };
        let rel = PathBuf::from(format!("frames/f{i:03}.pgm"));
        save_bayer(&dir.join(&rel), &frame, &meta)?;
        frames.push(ScenarioFrame { path: rel, exposure: None });
    }
    let events = if opts.events {
        let bar = MovingBarConfig { window_us: period, ..config.snn.data.clone() };
        let mut ev = moving_bar_dataset(&bar, opts.frames, opts.seed).events;
        if let Some(s) = opts.darken_at {
            // the light drop makes the whole sensor fire OFF events at once
            let t = s as u64 * period;
            for y in 0..bar.sensor.height {
                for x in 0..bar.sensor.width {
                    ev.push(DvsEvent::new(t + (y * bar.sensor.width + x) as u64, x, y, Polarity::Off));
                }
            }
            ev.sort_by_key(|e| e.t);
        }
        let rel = PathBuf::from("events.evt");
        save_events(&dir.join(&rel), bar.sensor, &ev)?;
        Some(rel)
    } else {
        None
    };
    let checkpoint = match &opts.net {
        Some(net) => {
            save_checkpoint(&dir.join("net.ckpt"), net)?;
            Some(PathBuf::from("net.ckpt"))
        }
        None => None,
    };
    save_config(&dir.join("config.json"), &config)?;
    let scenario = Scenario {
        schema_version: 1,
        events,
        event_sensor: Some(config.snn.data.sensor),
        frames,
        frame_interval_us: Some(period),
        config: Some(PathBuf::from("config.json")),
        policy: None,
        checkpoint,
        seed: Some(opts.seed),
        window_us: None,
        bins: None,
    };
    let path = dir.join("scenario.json");
    let text = serde_json::to_string_pretty(&scenario).map_err(crate::imgio::IoError::from)?;
    fs::write(&path, text + "\n").map_err(crate::imgio::IoError::from)?;
    Ok(path)
}
