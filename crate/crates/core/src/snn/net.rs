use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{real, Layer, LayerSpec, LifParams, Real, Result, Shape, SnnError};
use crate::events::VoxelGrid;

/// Architecture description, as stored in configs and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    /// Sensor `[height, width]`; the input has two polarity channels.
    pub input: [usize; 2],
    pub layers: Vec<LayerSpec>,
    pub lif: LifParams,
    /// Weights start uniform in `±init_gain * sqrt(3 / fan_in)`.
    pub init_gain: f64,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            input: [16, 16],
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Dense { out: 2 },
            ],
            lif: LifParams::default(),
            init_gain: 2.0,
        }
    }
}

impl NetSpec {
    pub fn input_shape(&self) -> Shape {
        Shape::new(VoxelGrid::POLARITIES, self.input[0], self.input[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(SnnError::InvalidParams("network needs at least one layer".into()));
        }
        if !(self.init_gain.is_finite() && self.init_gain >= 0.0) {
            return Err(SnnError::InvalidParams("init_gain must be finite and non-negative".into()));
        }
        self.lif.validate()?;
        let mut shape = self.input_shape();
        for l in &self.layers {
            shape = l.output_shape(shape)?;
        }
        Ok(())
    }
}

/// Feed-forward stack of LIF layers. The last layer's width is the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingNet<T = f64> {
    pub spec: NetSpec,
    pub layers: Vec<Layer<T>>,
}

/// Binary spike raster of one layer, `[timestep][neuron]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpikes {
    pub neurons: usize,
    pub steps: usize,
    pub data: Vec<u8>,
}

impl LayerSpikes {
    pub fn step(&self, t: usize) -> &[u8] {
        &self.data[t * self.neurons..(t + 1) * self.neurons]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRecord {
    pub layers: Vec<LayerSpikes>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T = f64> {
    /// Output spike counts summed over all timesteps.
    pub logits: Vec<T>,
    pub spikes: SpikeRecord,
}

impl<T: Real> ForwardOutput<T> {
    /// Index of the largest logit; ties go to the lower class.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.logits.iter().enumerate() {
            if v > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

impl<T: Real> SpikingNet<T> {
    /// Zero weights and biases.
    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        let lif = spec.lif.cast::<T>();
        let mut shape = spec.input_shape();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for ls in &spec.layers {
            let layer = Layer::zeros(ls.clone(), shape, lif)?;
            shape = layer.output;
            layers.push(layer);
        }
        Ok(SpikingNet { spec: spec.clone(), layers })
    }

    /// Seeded uniform initialization, zero biases.
    pub fn from_spec(spec: &NetSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = spec.init_gain * (3.0 / layer.fan_in() as f64).sqrt();
            for w in &mut layer.weights {
                *w = real(if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 });
            }
        }
        Ok(net)
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output.len())
    }

    pub fn input_shape(&self) -> Shape {
        self.layers[0].input
    }

    pub fn cast<U: Real>(&self) -> SpikingNet<U> {
        let c = |v: &T| U::from_f64(v.to_f64().unwrap()).unwrap();
        SpikingNet {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    input: l.input,
                    output: l.output,
                    weights: l.weights.iter().map(c).collect(),
                    bias: l.bias.iter().map(c).collect(),
                    lif: l.lif.cast(),
                })
                .collect(),
        }
    }

    pub fn check_input(&self, grid: &VoxelGrid) -> Result<()> {
        let want = self.input_shape();
        if grid.height != want.h || grid.width != want.w || grid.bins == 0 {
            return Err(SnnError::ShapeMismatch {
                expected: format!("{want} voxel planes"),
                got: format!("{}x{}x{} over {} bins", VoxelGrid::POLARITIES, grid.height, grid.width, grid.bins),
            });
        }
        Ok(())
    }

    /// Runs all timesteps of `grid`; membranes start at rest.
    pub fn forward(&self, grid: &VoxelGrid) -> Result<ForwardOutput<T>> {
        self.check_input(grid)?;
        let steps = grid.bins;
        let mut u: Vec<Vec<T>> = self.layers.iter().map(|l| vec![l.lif.u_rest; l.output.len()]).collect();
        let mut bufs: Vec<Vec<T>> = self.layers.iter().map(|l| vec![T::zero(); l.output.len()]).collect();
        let mut spikes: Vec<Vec<T>> = bufs.clone();
        let mut record: Vec<LayerSpikes> = self
            .layers
            .iter()
            .map(|l| LayerSpikes { neurons: l.output.len(), steps, data: vec![0; steps * l.output.len()] })
            .collect();
        let mut logits = vec![T::zero(); self.classes()];
        let mut input = vec![T::zero(); self.input_shape().len()];
        for t in 0..steps {
            for (x, &c) in input.iter_mut().zip(grid.bin(t)) {
                *x = if c != 0 { T::one() } else { T::zero() };
            }
            for (l, layer) in self.layers.iter().enumerate() {
                let (prev, rest) = spikes.split_at_mut(l);
                let x: &[T] = if l == 0 { &input } else { &prev[l - 1] };
                layer.current(x, &mut bufs[l]);
                let out = &mut rest[0];
                let rec = &mut record[l].data[t * layer.output.len()..(t + 1) * layer.output.len()];
                for (n, &i) in bufs[l].iter().enumerate() {
                    let v = layer.lif.integrate(u[l][n], i);
                    if v >= layer.lif.threshold {
                        out[n] = T::one();
                        rec[n] = 1;
                        u[l][n] = layer.lif.u_rest;
                    } else {
                        out[n] = T::zero();
                        u[l][n] = v;
                    }
                }
            }
            for (z, &s) in logits.iter_mut().zip(spikes.last().unwrap()) {
                *z = *z + s;
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(SnnError::NonFiniteInput("logits"));
        }
        Ok(ForwardOutput { logits, spikes: SpikeRecord { layers: record } })
    }
}

/// Fraction of (hidden neuron, sample) pairs that never fire. Hidden layers
/// are all but the output layer; a single-layer net counts its only layer.
pub fn sparsity<T: Real>(net: &SpikingNet<T>, dataset: &[VoxelGrid]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(SnnError::EmptyBatch);
    }
    let hidden = if net.layers.len() > 1 { net.layers.len() - 1 } else { 1 };
    let mut silent = 0usize;
    let mut total = 0usize;
    for grid in dataset {
        let out = net.forward(grid)?;
        for layer in &out.spikes.layers[..hidden] {
            for n in 0..layer.neurons {
                total += 1;
                if (0..layer.steps).all(|t| layer.data[t * layer.neurons + n] == 0) {
                    silent += 1;
                }
            }
        }
    }
    Ok(silent as f64 / total as f64)
}
