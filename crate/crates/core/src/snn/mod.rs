//! Leaky integrate-and-fire spiking networks.
//!
//! Membrane dynamics follow `tau_m du/dt = u_rest - u + R I(t)` integrated
//! with forward Euler at `dt = 1`. A neuron fires when the integrated
//! potential reaches the threshold and is then hard-reset to `u_rest`.
//! Training replaces the threshold derivative with a fast-sigmoid surrogate
//! and backpropagates through the unrolled timesteps.

mod adamw;
mod checkpoint;
mod experiment;
mod layer;
mod net;
mod train;

pub use adamw::{adamw_update, AdamW, AdamWParams};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use experiment::{evaluate, labeled_samples, run_experiment, test_seed, ExperimentConfig, ExperimentReport};
pub use layer::{Layer, LayerSpec, Shape};
pub use net::{sparsity, ForwardOutput, LayerSpikes, NetSpec, SpikeRecord, SpikingNet};
pub use train::{
    accuracy, batch_loss, bptt_train_step, firing_pattern, loss_and_grad, train, EpochReport, Gradients, Sample, SpikeMode,
    TrainConfig,
};

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("loss diverged to {0}")]
    NonFiniteLoss(f64),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SnnError> = std::result::Result<T, E>;

/// Floating-point type the network is evaluated in.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl<T: Float + FromPrimitive + Debug + Default + Send + Sync + 'static> Real for T {}

#[inline]
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// Constants of one LIF population. The integration step is one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifParams<T = f64> {
    pub tau_m: T,
    pub u_rest: T,
    pub resistance: T,
    pub threshold: T,
}

impl Default for LifParams<f64> {
    fn default() -> Self {
        LifParams { tau_m: 2.0, u_rest: 0.0, resistance: 1.0, threshold: 1.0 }
    }
}

impl<T: Real> LifParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.tau_m, self.u_rest, self.resistance, self.threshold]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SnnError::InvalidParams("LIF constants must be finite".into()));
        }
        if self.tau_m < T::one() {
            return Err(SnnError::InvalidParams("tau_m must be >= dt (1)".into()));
        }
        if self.resistance <= T::zero() {
            return Err(SnnError::InvalidParams("resistance must be positive".into()));
        }
        if self.threshold <= self.u_rest {
            return Err(SnnError::InvalidParams("threshold must exceed u_rest".into()));
        }
        Ok(())
    }

    /// One forward-Euler step of the membrane equation, before thresholding.
    #[inline]
    pub fn integrate(&self, u: T, current: T) -> T {
        u + (self.u_rest - u + self.resistance * current) / self.tau_m
    }

    pub fn cast<U: Real>(&self) -> LifParams<U> {
        let c = |v: T| U::from_f64(v.to_f64().unwrap()).unwrap();
        LifParams {
            tau_m: c(self.tau_m),
            u_rest: c(self.u_rest),
            resistance: c(self.resistance),
            threshold: c(self.threshold),
        }
    }
}

/// Membrane potentials of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayerState<T = f64> {
    pub u: Vec<T>,
}

impl<T: Real> LifLayerState<T> {
    pub fn at_rest(neurons: usize, params: &LifParams<T>) -> Self {
        LifLayerState { u: vec![params.u_rest; neurons] }
    }
}

/// Integrate, threshold, reset. Returns the binary spike vector.
pub fn lif_step<T: Real>(state: &mut LifLayerState<T>, current: &[T], params: &LifParams<T>) -> Result<Vec<T>> {
    if current.len() != state.u.len() {
        return Err(SnnError::ShapeMismatch {
            expected: format!("{} currents", state.u.len()),
            got: current.len().to_string(),
        });
    }
    if current.iter().any(|v| !v.is_finite()) {
        return Err(SnnError::NonFiniteInput("input current"));
    }
    if state.u.iter().any(|v| !v.is_finite()) {
        return Err(SnnError::NonFiniteInput("membrane state"));
    }
    let mut spikes = vec![T::zero(); current.len()];
    for ((u, &i), s) in state.u.iter_mut().zip(current).zip(&mut spikes) {
        let v = params.integrate(*u, i);
        if v >= params.threshold {
            *s = T::one();
            *u = params.u_rest;
        } else {
            *u = v;
        }
    }
    Ok(spikes)
}

/// Sharpness of the fast-sigmoid surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateParams {
    pub slope: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams { slope: 10.0 }
    }
}

/// Fast-sigmoid surrogate of the spike derivative: `1 / (1 + k |u - theta|)^2`.
#[inline]
pub fn surrogate_derivative<T: Real>(u: T, theta: T, k: T) -> T {
    let d = T::one() + k * (u - theta).abs();
    T::one() / (d * d)
}

/// Smooth spike whose exact derivative is [`surrogate_derivative`]. Used by
/// the relaxed forward pass that gradient checks differentiate.
#[inline]
pub fn relaxed_spike<T: Real>(u: T, theta: T, k: T) -> T {
    let x = u - theta;
    real::<T>(0.5) + x / (T::one() + k * x.abs())
}
