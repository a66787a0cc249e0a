use serde::{Deserialize, Serialize};

use super::{real, Real, Result, SnnError, SpikingNet};
use super::train::Gradients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        AdamWParams { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

impl AdamWParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.lr >= 0.0
            && self.lr.is_finite()
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SnnError::InvalidParams(format!("bad AdamW hyperparameters {self:?}")))
        }
    }
}

/// One decoupled-weight-decay Adam step on a flat tensor. `step` is the
/// 1-based update count used for bias correction.
pub fn adamw_update<T: Real>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64, hyper: &AdamWParams) {
    assert!(param.len() == grad.len() && m.len() == param.len() && v.len() == param.len());
    let (lr, b1, b2, eps, wd) = (
        real::<T>(hyper.lr),
        real::<T>(hyper.beta1),
        real::<T>(hyper.beta2),
        real::<T>(hyper.eps),
        real::<T>(hyper.weight_decay),
    );
    let one = T::one();
    let c1 = one - b1.powi(step as i32);
    let c2 = one - b2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] = param[i] - lr * wd * param[i];
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// AdamW with moment buffers for every tensor of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T = f64> {
    pub hyper: AdamWParams,
    pub step: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> AdamW<T> {
    pub fn new(hyper: AdamWParams, net: &SpikingNet<T>) -> Result<Self> {
        hyper.validate()?;
        let mut moments = Vec::new();
        for l in &net.layers {
            moments.push((vec![T::zero(); l.weights.len()], vec![T::zero(); l.weights.len()]));
            moments.push((vec![T::zero(); l.bias.len()], vec![T::zero(); l.bias.len()]));
        }
        Ok(AdamW { hyper, step: 0, moments })
    }

    pub fn apply(&mut self, net: &mut SpikingNet<T>, grads: &Gradients<T>) {
        self.step += 1;
        let mut moments = self.moments.iter_mut();
        for (layer, (dw, db)) in net.layers.iter_mut().zip(&grads.layers) {
            let (m, v) = moments.next().unwrap();
            adamw_update(&mut layer.weights, dw, m, v, self.step, &self.hyper);
            let (m, v) = moments.next().unwrap();
            adamw_update(&mut layer.bias, db, m, v, self.step, &self.hyper);
        }
    }
}
