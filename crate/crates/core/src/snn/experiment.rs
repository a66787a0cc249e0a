//! The moving-bar classification experiment: synthetic data, training and
//! evaluation under one configuration.

use serde::{Deserialize, Serialize};

use super::{accuracy, sparsity, train, AdamW, AdamWParams, EpochReport, NetSpec, Result, Sample, SpikingNet};
use super::{SurrogateParams, TrainConfig};
use crate::events::synth::{moving_bar_dataset, LabeledStream, MovingBarConfig};
use crate::events::{voxelize, window_segment_span, EventError, VoxelGrid};

/// Network, training and synthetic-data settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub net: NetSpec,
    pub train: TrainConfig,
    pub adamw: AdamWParams,
    pub surrogate: SurrogateParams,
    /// Moving-bar generator; its `window_us` is also the voxel window length.
    pub data: MovingBarConfig,
    /// Time bins per voxel grid, which is also the number of SNN timesteps.
    pub bins: usize,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            net: NetSpec::default(),
            train: TrainConfig::default(),
            adamw: AdamWParams::default(),
            surrogate: SurrogateParams::default(),
            data: MovingBarConfig::default(),
            bins: 5,
            train_samples: 200,
            test_samples: 50,
        }
    }
}

impl ExperimentConfig {
    /// First violated invariant as `(json path, message)`, relative to this section.
    pub fn violation(&self) -> Option<(String, String)> {
        let v = |p: &str, m: String| Some((p.to_string(), m));
        if let Err(e) = self.net.validate() {
            return v("net", e.to_string());
        }
        let sensor = self.data.sensor;
        if self.net.input != [sensor.height as usize, sensor.width as usize] {
            return v("net.input", format!("must equal the data sensor [{}, {}]", sensor.height, sensor.width));
        }
        if let Err(e) = self.adamw.validate() {
            return v("adamw", e.to_string());
        }
        if !(self.surrogate.slope.is_finite() && self.surrogate.slope > 0.0) {
            return v("surrogate.slope", "must be positive".into());
        }
        if self.train.batch_size == 0 {
            return v("train.batch_size", "must be at least 1".into());
        }
        if self.bins == 0 {
            return v("bins", "must be at least 1".into());
        }
        if self.data.window_us == 0 {
            return v("data.window_us", "must be positive".into());
        }
        if sensor.width == 0 || sensor.height == 0 {
            return v("data.sensor", "must be at least 1x1".into());
        }
        if !(0.0..=1.0).contains(&self.data.fire_prob) {
            return v("data.fire_prob", "must lie in [0, 1]".into());
        }
        let [lo, hi] = self.data.speed;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return v("data.speed", "must be a finite range [lo, hi] with 0 <= lo <= hi".into());
        }
        if self.train_samples == 0 {
            return v("train_samples", "must be at least 1".into());
        }
        if self.test_samples == 0 {
            return v("test_samples", "must be at least 1".into());
        }
        None
    }

    /// Training and test streams. The test stream uses its own seed so the
    /// two sets never share a sample sequence.
    pub fn streams(&self, seed: u64) -> (LabeledStream, LabeledStream) {
        (
            moving_bar_dataset(&self.data, self.train_samples, seed),
            moving_bar_dataset(&self.data, self.test_samples, test_seed(seed)),
        )
    }

    pub fn datasets(&self, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let (train, test) = self.streams(seed);
        Ok((labeled_samples(&train, self.bins)?, labeled_samples(&test, self.bins)?))
    }
}

pub fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// One voxel grid per labeled window.
pub fn labeled_samples(stream: &LabeledStream, bins: usize) -> Result<Vec<Sample>> {
    let windows = window_segment_span(&stream.events, stream.window_us, 0, stream.span_end()).map_err(event_err)?;
    windows
        .iter()
        .zip(&stream.labels)
        .map(|(w, &y)| Ok((voxelize(w, bins, stream.sensor).map_err(event_err)?, y as usize)))
        .collect()
}

fn event_err(e: EventError) -> super::SnnError {
    super::SnnError::InvalidParams(format!("dataset: {e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub net: SpikingNet,
    pub epochs: Vec<EpochReport>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Hidden-layer sparsity over the test set.
    pub sparsity: f64,
}

/// Builds the network from `seed`, trains it and evaluates it on held-out data.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<ExperimentReport> {
    let (train_set, test_set) = cfg.datasets(seed)?;
    let mut net = SpikingNet::from_spec(&cfg.net, seed)?;
    let mut opt = AdamW::new(cfg.adamw, &net)?;
    let epochs = train(&mut net, &mut opt, &train_set, &cfg.train, &cfg.surrogate, on_epoch)?;
    let train_accuracy = accuracy(&net, &train_set)?;
    let (test_accuracy, sparsity) = evaluate_on(&net, &test_set)?;
    Ok(ExperimentReport { net, epochs, train_accuracy, test_accuracy, sparsity })
}

/// Test accuracy and sparsity of `net` on the held-out set for `seed`.
pub fn evaluate(net: &SpikingNet, cfg: &ExperimentConfig, seed: u64) -> Result<(f64, f64)> {
    let test = labeled_samples(&moving_bar_dataset(&cfg.data, cfg.test_samples, test_seed(seed)), cfg.bins)?;
    evaluate_on(net, &test)
}

fn evaluate_on(net: &SpikingNet, test: &[Sample]) -> Result<(f64, f64)> {
    let grids: Vec<VoxelGrid> = test.iter().map(|(g, _)| g.clone()).collect();
    Ok((accuracy(net, test)?, sparsity(net, &grids)?))
}
