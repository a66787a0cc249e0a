//! Surrogate-gradient BPTT.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{real, relaxed_spike, surrogate_derivative, AdamW, Real, Result, SnnError, SpikingNet, SurrogateParams};
use crate::events::VoxelGrid;

/// How the forward pass turns membrane potential into spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    /// Heaviside spikes; only the backward pass sees the surrogate.
    Hard,
    /// Spikes replaced by the smooth function whose derivative is the
    /// surrogate. The backward pass is then the exact gradient, which makes
    /// finite differences a valid check.
    Relaxed,
}

/// Per-layer `(d weights, d bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &SpikingNet<T>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients<T>) {
        for ((dw, db), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            dw.iter_mut().zip(ow).for_each(|(a, &b)| *a = *a + b);
            db.iter_mut().zip(ob).for_each(|(a, &b)| *a = *a + b);
        }
    }

    fn scale(&mut self, s: T) {
        for (dw, db) in &mut self.layers {
            dw.iter_mut().chain(db.iter_mut()).for_each(|a| *a = *a * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

/// A training example: voxel grid plus class label.
pub type Sample = (VoxelGrid, usize);

struct Tape<T> {
    /// `[layer][t]` spikes emitted (soft in relaxed mode).
    spikes: Vec<Vec<Vec<T>>>,
    /// `[layer][t]` integrated potential before threshold/reset.
    potential: Vec<Vec<Vec<T>>>,
    /// `[layer][t]` hard threshold crossings; these drive the reset.
    fired: Vec<Vec<Vec<bool>>>,
    inputs: Vec<Vec<T>>,
    logits: Vec<T>,
}

fn run_tape<T: Real>(net: &SpikingNet<T>, grid: &VoxelGrid, k: T, mode: SpikeMode) -> Result<Tape<T>> {
    net.check_input(grid)?;
    let steps = grid.bins;
    let n_layers = net.layers.len();
    let mut tape = Tape {
        spikes: vec![Vec::with_capacity(steps); n_layers],
        potential: vec![Vec::with_capacity(steps); n_layers],
        fired: vec![Vec::with_capacity(steps); n_layers],
        inputs: Vec::with_capacity(steps),
        logits: vec![T::zero(); net.classes()],
    };
    let mut u: Vec<Vec<T>> = net.layers.iter().map(|l| vec![l.lif.u_rest; l.output.len()]).collect();
    for t in 0..steps {
        tape.inputs.push(grid.bin(t).iter().map(|&c| if c != 0 { T::one() } else { T::zero() }).collect());
        for (l, layer) in net.layers.iter().enumerate() {
            let n = layer.output.len();
            let mut current = vec![T::zero(); n];
            {
                let x: &[T] = if l == 0 { &tape.inputs[t] } else { &tape.spikes[l - 1][t] };
                layer.current(x, &mut current);
            }
            let mut v = vec![T::zero(); n];
            let mut s = vec![T::zero(); n];
            let mut fired = vec![false; n];
            for j in 0..n {
                v[j] = layer.lif.integrate(u[l][j], current[j]);
                fired[j] = v[j] >= layer.lif.threshold;
                s[j] = match mode {
                    SpikeMode::Hard => {
                        if fired[j] {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    SpikeMode::Relaxed => relaxed_spike(v[j], layer.lif.threshold, k),
                };
                u[l][j] = if fired[j] { layer.lif.u_rest } else { v[j] };
            }
            tape.potential[l].push(v);
            tape.spikes[l].push(s);
            tape.fired[l].push(fired);
        }
        for (z, &s) in tape.logits.iter_mut().zip(&tape.spikes[n_layers - 1][t]) {
            *z = *z + s;
        }
    }
    Ok(tape)
}

/// `-log softmax(z)[label]` and its gradient w.r.t. `z`.
fn cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    let loss = sum.ln() - (logits[label] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| e / sum - if i == label { T::one() } else { T::zero() })
        .collect();
    (loss, grad)
}

fn sample_grad<T: Real>(
    net: &SpikingNet<T>,
    grid: &VoxelGrid,
    label: usize,
    k: T,
    mode: SpikeMode,
) -> Result<(T, Gradients<T>)> {
    if label >= net.classes() {
        return Err(SnnError::LabelOutOfRange { label, classes: net.classes() });
    }
    let tape = run_tape(net, grid, k, mode)?;
    let (loss, d_logits) = cross_entropy(&tape.logits, label);
    let mut grads = Gradients::zeros_like(net);
    let n_layers = net.layers.len();
    // dL/du carried backwards in time, per layer.
    let mut du: Vec<Vec<T>> = net.layers.iter().map(|l| vec![T::zero(); l.output.len()]).collect();
    for t in (0..grid.bins).rev() {
        let mut ds = d_logits.clone();
        for l in (0..n_layers).rev() {
            let layer = &net.layers[l];
            let alpha = T::one() / layer.lif.tau_m;
            let theta = layer.lif.threshold;
            let n = layer.output.len();
            let mut d_current = vec![T::zero(); n];
            for j in 0..n {
                let v = tape.potential[l][t][j];
                let through_reset = if tape.fired[l][t][j] { T::zero() } else { du[l][j] };
                let dv = ds[j] * surrogate_derivative(v, theta, k) + through_reset;
                du[l][j] = dv * (T::one() - alpha);
                d_current[j] = dv * alpha * layer.lif.resistance;
            }
            let x: &[T] = if l == 0 { &tape.inputs[t] } else { &tape.spikes[l - 1][t] };
            let (dw, db) = &mut grads.layers[l];
            if l > 0 {
                let mut dx = vec![T::zero(); layer.input.len()];
                layer.backward(x, &d_current, dw, db, Some(&mut dx));
                ds = dx;
            } else {
                layer.backward(x, &d_current, dw, db, None);
            }
        }
    }
    Ok((loss, grads))
}

/// Mean cross-entropy over `batch` and its BPTT gradient. Per-sample work
/// runs in parallel; the reduction is in batch order, so results do not
/// depend on thread count.
pub fn loss_and_grad<T: Real>(
    net: &SpikingNet<T>,
    batch: &[(&VoxelGrid, usize)],
    surrogate: &SurrogateParams,
    mode: SpikeMode,
) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(SnnError::EmptyBatch);
    }
    let k = real::<T>(surrogate.slope);
    let per_sample: Vec<Result<(T, Gradients<T>)>> =
        batch.par_iter().map(|&(g, y)| sample_grad(net, g, y, k, mode)).collect();
    let mut total = Gradients::zeros_like(net);
    let mut loss = T::zero();
    for r in per_sample {
        let (l, g) = r?;
        loss = loss + l;
        total.add_assign(&g);
    }
    let inv = T::one() / real::<T>(batch.len() as f64);
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Forward loss only, for finite-difference checks.
pub fn batch_loss<T: Real>(
    net: &SpikingNet<T>,
    batch: &[(&VoxelGrid, usize)],
    surrogate: &SurrogateParams,
    mode: SpikeMode,
) -> Result<T> {
    let k = real::<T>(surrogate.slope);
    let mut loss = T::zero();
    for &(g, y) in batch {
        let tape = run_tape(net, g, k, mode)?;
        loss = loss + cross_entropy(&tape.logits, y).0;
    }
    Ok(loss / real::<T>(batch.len() as f64))
}

/// Hard-threshold crossings of every neuron at every step, flattened.
pub fn firing_pattern<T: Real>(net: &SpikingNet<T>, grid: &VoxelGrid, surrogate: &SurrogateParams, mode: SpikeMode) -> Result<Vec<bool>> {
    let tape = run_tape(net, grid, real::<T>(surrogate.slope), mode)?;
    Ok(tape.fired.into_iter().flatten().flatten().collect())
}

/// One optimizer step on `batch`; returns the pre-update loss.
pub fn bptt_train_step<T: Real>(
    net: &mut SpikingNet<T>,
    batch: &[(&VoxelGrid, usize)],
    surrogate: &SurrogateParams,
    opt: &mut AdamW<T>,
) -> Result<T> {
    let (loss, grads) = loss_and_grad(net, batch, surrogate, SpikeMode::Hard)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(SnnError::NonFiniteLoss(loss.to_f64().unwrap_or(f64::NAN)));
    }
    opt.apply(net, &grads);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 16, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy<T: Real>(net: &SpikingNet<T>, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(SnnError::EmptyBatch);
    }
    let hits: Vec<Result<bool>> =
        data.par_iter().map(|(g, y)| Ok(net.forward(g)?.predicted_class() == *y)).collect();
    let mut correct = 0usize;
    for h in hits {
        correct += h? as usize;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch training with a seeded shuffle each epoch.
pub fn train<T: Real>(
    net: &mut SpikingNet<T>,
    opt: &mut AdamW<T>,
    data: &[Sample],
    cfg: &TrainConfig,
    surrogate: &SurrogateParams,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(SnnError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&VoxelGrid, usize)> = chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let loss = bptt_train_step(net, &batch, surrogate, opt)?;
            loss_sum += loss.to_f64().unwrap() * chunk.len() as f64;
        }
        let report = EpochReport {
            epoch: epoch + 1,
            loss: loss_sum / data.len() as f64,
            train_accuracy: accuracy(net, data)?,
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}
