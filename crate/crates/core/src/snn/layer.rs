use serde::{Deserialize, Serialize};

use super::{LifParams, Real, Result, SnnError};

/// `[channels][height][width]` activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Dense { out: usize },
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(SnnError::InvalidParams("conv sizes must be positive".into()));
                }
                let span = |n: usize| (n + 2 * padding).checked_sub(kernel).map(|s| s / stride + 1);
                match (span(input.h), span(input.w)) {
                    (Some(h), Some(w)) => Ok(Shape::new(out_channels, h, w)),
                    _ => Err(SnnError::ShapeMismatch {
                        expected: format!("input of at least {kernel}x{kernel} after padding"),
                        got: input.to_string(),
                    }),
                }
            }
            LayerSpec::Dense { out } => {
                if out == 0 {
                    return Err(SnnError::InvalidParams("dense width must be positive".into()));
                }
                Ok(Shape::new(out, 1, 1))
            }
        }
    }

    fn weight_count(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv { out_channels, kernel, .. } => out_channels * input.c * kernel * kernel,
            LayerSpec::Dense { out } => out * input.len(),
        }
    }

    fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv { kernel, .. } => input.c * kernel * kernel,
            LayerSpec::Dense { .. } => input.len(),
        }
    }
}

/// A synaptic layer (conv or dense) followed by LIF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f64> {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    /// Conv: `[out][in][ky][kx]`. Dense: `[out][in]`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub lif: LifParams<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(spec: LayerSpec, input: Shape, lif: LifParams<T>) -> Result<Self> {
        let output = spec.output_shape(input)?;
        Ok(Layer {
            weights: vec![T::zero(); spec.weight_count(input)],
            bias: vec![T::zero(); output.c],
            spec,
            input,
            output,
            lif,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.spec.fan_in(self.input)
    }

    /// Bias index of each output neuron is its channel.
    #[inline]
    fn channel_of(&self, neuron: usize) -> usize {
        neuron / (self.output.h * self.output.w)
    }

    /// Synaptic current `W x + b` into `out`.
    pub fn current(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.input.len());
        debug_assert_eq!(out.len(), self.output.len());
        match self.spec {
            LayerSpec::Dense { .. } => {
                let n_in = self.input.len();
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &self.weights[j * n_in..(j + 1) * n_in];
                    let mut acc = self.bias[j];
                    for (&w, &xi) in row.iter().zip(x) {
                        if xi != T::zero() {
                            acc = acc + w * xi;
                        }
                    }
                    *o = acc;
                }
            }
            LayerSpec::Conv { kernel, stride, padding, .. } => {
                let (inp, outp) = (self.input, self.output);
                let plane = outp.h * outp.w;
                for (n, o) in out.iter_mut().enumerate() {
                    *o = self.bias[n / plane];
                }
                for c in 0..inp.c {
                    for iy in 0..inp.h {
                        for ix in 0..inp.w {
                            let xi = x[(c * inp.h + iy) * inp.w + ix];
                            if xi == T::zero() {
                                continue;
                            }
                            self.scatter(iy, ix, kernel, stride, padding, |oy, ox, ky, kx| {
                                for oc in 0..outp.c {
                                    let w = self.weights[((oc * inp.c + c) * kernel + ky) * kernel + kx];
                                    let o = &mut out[(oc * outp.h + oy) * outp.w + ox];
                                    *o = *o + w * xi;
                                }
                            });
                        }
                    }
                }
            }
        }
    }

    /// Calls `f(oy, ox, ky, kx)` for every output position whose receptive
    /// field covers input pixel `(iy, ix)` through kernel tap `(ky, kx)`.
    #[inline]
    fn scatter(
        &self,
        iy: usize,
        ix: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        mut f: impl FnMut(usize, usize, usize, usize),
    ) {
        let outp = self.output;
        for ky in 0..kernel {
            let py = iy + padding;
            if py < ky || (py - ky) % stride != 0 {
                continue;
            }
            let oy = (py - ky) / stride;
            if oy >= outp.h {
                continue;
            }
            for kx in 0..kernel {
                let px = ix + padding;
                if px < kx || (px - kx) % stride != 0 {
                    continue;
                }
                let ox = (px - kx) / stride;
                if ox >= outp.w {
                    continue;
                }
                f(oy, ox, ky, kx);
            }
        }
    }

    /// Accumulates parameter gradients for current gradient `d_current` at
    /// input `x`, and writes the input gradient into `d_input` when given.
    pub fn backward(&self, x: &[T], d_current: &[T], dw: &mut [T], db: &mut [T], d_input: Option<&mut [T]>) {
        for (n, &g) in d_current.iter().enumerate() {
            let c = self.channel_of(n);
            db[c] = db[c] + g;
        }
        match self.spec {
            LayerSpec::Dense { .. } => {
                let n_in = self.input.len();
                for (j, &g) in d_current.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    let row = &mut dw[j * n_in..(j + 1) * n_in];
                    for (d, &xi) in row.iter_mut().zip(x) {
                        *d = *d + g * xi;
                    }
                }
                if let Some(dx) = d_input {
                    dx.fill(T::zero());
                    for (j, &g) in d_current.iter().enumerate() {
                        if g == T::zero() {
                            continue;
                        }
                        let row = &self.weights[j * n_in..(j + 1) * n_in];
                        for (d, &w) in dx.iter_mut().zip(row) {
                            *d = *d + g * w;
                        }
                    }
                }
            }
            LayerSpec::Conv { kernel, stride, padding, .. } => {
                let (inp, outp) = (self.input, self.output);
                let mut dx = d_input;
                for c in 0..inp.c {
                    for iy in 0..inp.h {
                        for ix in 0..inp.w {
                            let idx = (c * inp.h + iy) * inp.w + ix;
                            let xi = x[idx];
                            let mut acc = T::zero();
                            let want_dx = dx.is_some();
                            self.scatter(iy, ix, kernel, stride, padding, |oy, ox, ky, kx| {
                                for oc in 0..outp.c {
                                    let g = d_current[(oc * outp.h + oy) * outp.w + ox];
                                    let wi = ((oc * inp.c + c) * kernel + ky) * kernel + kx;
                                    if xi != T::zero() {
                                        dw[wi] = dw[wi] + g * xi;
                                    }
                                    if want_dx {
                                        acc = acc + g * self.weights[wi];
                                    }
                                }
                            });
                            if let Some(d) = dx.as_deref_mut() {
                                d[idx] = acc;
                            }
                        }
                    }
                }
            }
        }
    }
}
