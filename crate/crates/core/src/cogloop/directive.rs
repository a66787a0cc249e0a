use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::{CogError, Result};
use crate::fixed::GainQ8;
use crate::isp::{IspConfig, IspPipeline};

/// A requested change to the runtime-mutable part of the ISP configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpuDirective {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awb_gains: Option<[GainQ8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlm_strength: Option<f64>,
    /// `[x, y, width, height]` in sensor pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<[u32; 4]>,
    /// Issue time in µs.
    #[serde(default)]
    pub t_us: u64,
}

impl NpuDirective {
    pub fn is_empty(&self) -> bool {
        self.awb_gains.is_none() && self.gamma.is_none() && self.nlm_strength.is_none() && self.roi.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CogError::InvalidDirective(m));
        if self.is_empty() {
            return bad("directive changes nothing".into());
        }
        if let Some(g) = self.awb_gains {
            if let Some(i) = g.iter().position(|g| !g.is_valid()) {
                return bad(format!("awb_gains[{i}] = {} exceeds {}", g[i].0, GainQ8::MAX.0));
            }
        }
        if let Some(e) = self.gamma {
            if !(e.is_finite() && e > 0.0) {
                return bad(format!("gamma {e} must be positive"));
            }
        }
        if let Some(h) = self.nlm_strength {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("nlm_strength {h} must be positive"));
            }
        }
        if let Some([_, _, w, h]) = self.roi {
            if w == 0 || h == 0 {
                return bad("roi must have a non-zero size".into());
            }
        }
        Ok(())
    }
}

/// Patches `config` with the fields present in `d`. The whole directive is
/// rejected, leaving nothing changed, if any field is out of range.
pub fn apply_directive(config: &IspConfig, d: &NpuDirective) -> Result<IspConfig> {
    d.validate()?;
    let mut next = config.clone();
    if let Some(g) = d.awb_gains {
        next.awb.gains = g;
    }
    if let Some(e) = d.gamma {
        next.gamma.exponent = e;
    }
    if let Some(h) = d.nlm_strength {
        next.nlm.h = h;
    }
    if d.roi.is_some() {
        next.roi = d.roi;
    }
    next.revision += 1;
    next.validate().map_err(|e| CogError::InvalidDirective(e.to_string()))?;
    Ok(next)
}

/// One line of the directive log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveRecord {
    /// The frame whose statistics produced the directive. It takes effect
    /// from frame `frame + 1`.
    pub frame: u64,
    #[serde(flatten)]
    pub directive: NpuDirective,
}

impl DirectiveRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("directive records always serialize")
    }
}

/// Ordered single-producer, single-consumer directive channel. The ISP side
/// drains it only between frames.
#[derive(Debug)]
pub struct DirectiveQueue {
    tx: Sender<NpuDirective>,
    rx: Receiver<NpuDirective>,
}

impl Default for DirectiveQueue {
    fn default() -> Self {
        let (tx, rx) = channel();
        DirectiveQueue { tx, rx }
    }
}

impl DirectiveQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sender(&self) -> Sender<NpuDirective> {
        self.tx.clone()
    }

    /// Applies every queued directive in order. Invalid directives are
    /// returned with their error and leave the configuration untouched.
    pub fn drain_at_sof(&self, pipeline: &mut IspPipeline) -> Vec<(NpuDirective, Result<()>)> {
        let mut done = Vec::new();
        while let Ok(d) = self.rx.try_recv() {
            let outcome = apply_directive(pipeline.config(), &d)
                .and_then(|c| pipeline.set_config(c).map_err(|e| CogError::InvalidDirective(e.to_string())));
            done.push((d, outcome));
        }
        done
    }
}
