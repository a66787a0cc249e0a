//! Schedulers that move tokens through a chain of stages.
//!
//! The polled scheduler models synchronous valid/ready links: each cycle all
//! handshake signals are resolved first and then every link with `valid &&
//! ready` transfers one token. A pointwise stage whose output is taken in a
//! cycle may accept a new token in that same cycle, so ready is resolved from
//! the sink backwards. Seeded stall injection can drop the source's
//! valid and any consumer's ready on any cycle. A monitor checks that a
//! stalled payload is still presented unchanged on the next cycle and counts
//! the transfers on every link.
//!
//! The threaded scheduler runs each stage on its own thread, linked by
//! single-slot channels.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand::rngs::SmallRng;
use serde::{Deserialize, Serialize};

use super::{IspError, PixelToken, Result, Stage};

/// Probabilities of deasserting a handshake signal on a given cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallConfig {
    pub seed: u64,
    pub source: f64,
    pub stage: f64,
    pub sink: f64,
}

impl StallConfig {
    pub fn uniform(seed: u64, p: f64) -> Self {
        StallConfig { seed, source: p, stage: p, sink: p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Schedule {
    #[default]
    Polled,
    Stalled(StallConfig),
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub transfers: u64,
    /// Cycles with valid asserted and ready low.
    pub stalls: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreamReport {
    pub cycles: u64,
    pub links: Vec<LinkStats>,
    /// Peak live lines and line capacity of each stage.
    pub lines: Vec<(usize, usize)>,
}

/// Handshake signals of one link in the current cycle.
#[derive(Debug, Clone, Copy, Default)]
struct Wire {
    valid: bool,
    ready: bool,
    payload: PixelToken,
    /// Stalled last cycle with payload `last`.
    held: bool,
    last: PixelToken,
}

/// Cycles without any transfer before the run is declared stuck.
const DEADLOCK_CYCLES: u64 = 100_000;

fn line_usage(stages: &[Box<dyn Stage>]) -> Vec<(usize, usize)> {
    stages.iter().map(|s| (s.peak_lines(), s.line_capacity())).collect()
}

/// Drives `input` through `stages` and hands each output token to `sink`
/// with its index. Link 0 is source to first stage, link `n` is last stage
/// to sink.
pub fn run_polled(
    stages: &mut [Box<dyn Stage>],
    input: &[PixelToken],
    stall: Option<&StallConfig>,
    mut sink: impl FnMut(usize, PixelToken),
) -> Result<StreamReport> {
    let n = stages.len();
    let total = input.len();
    let mut rng = stall.map(|s| SmallRng::seed_from_u64(s.seed));
    let coin = |p: f64| Bernoulli::new(p).map_err(|_| IspError::InvalidConfig(format!("stall probability {p}")));
    let (p_src, p_stage, p_sink) = match stall {
        Some(c) => (coin(c.source)?, coin(c.stage)?, coin(c.sink)?),
        None => (coin(0.0)?, coin(0.0)?, coin(0.0)?),
    };
    let mut links = vec![LinkStats::default(); n + 1];
    let mut wires = vec![Wire::default(); n + 1];
    let (mut src, mut src_offered, mut delivered) = (0usize, false, 0usize);
    let (mut cycles, mut idle) = (0u64, 0u64);

    while delivered < total {
        cycles += 1;
        for s in stages.iter_mut() {
            s.step();
        }

        if src < total && !src_offered {
            src_offered = match &mut rng {
                Some(r) => !p_src.sample(r),
                None => true,
            };
        }
        wires[0].valid = src < total && src_offered;
        if wires[0].valid {
            wires[0].payload = input[src];
        }
        for (w, s) in wires[1..].iter_mut().zip(stages.iter()) {
            w.valid = match s.output() {
                Some(t) => {
                    w.payload = *t;
                    true
                }
                None => false,
            };
        }
        let mut downstream_takes = false;
        for i in (0..=n).rev() {
            let (open, p) = if i < n {
                let s = &stages[i];
                (s.ready() || (downstream_takes && s.ready_when_drained()), &p_stage)
            } else {
                (true, &p_sink)
            };
            let stalled = match &mut rng {
                Some(r) => p.sample(r),
                None => false,
            };
            let w = &mut wires[i];
            w.ready = open && !stalled;
            downstream_takes = w.valid && w.ready;
        }

        for (i, (w, l)) in wires.iter_mut().zip(links.iter_mut()).enumerate() {
            if w.held {
                if !w.valid {
                    return Err(IspError::Handshake { link: i, reason: "valid dropped while stalled".into() });
                }
                if w.payload != w.last {
                    return Err(IspError::Handshake { link: i, reason: "payload changed while stalled".into() });
                }
            }
            w.held = w.valid && !w.ready;
            if w.held {
                w.last = w.payload;
                l.stalls += 1;
            }
        }

        let mut moved = false;
        for i in (0..=n).rev() {
            if !(wires[i].valid && wires[i].ready) {
                continue;
            }
            let tok = if i == 0 {
                src += 1;
                src_offered = false;
                wires[0].payload
            } else {
                stages[i - 1].take().expect("valid output register")
            };
            if i == n {
                sink(delivered, tok);
                delivered += 1;
            } else {
                stages[i].push(tok)?;
            }
            links[i].transfers += 1;
            moved = true;
        }
        idle = if moved { 0 } else { idle + 1 };
        if idle > DEADLOCK_CYCLES {
            return Err(IspError::Deadlock { cycles });
        }
    }

    for (i, l) in links.iter().enumerate() {
        if l.transfers != total as u64 {
            return Err(IspError::Handshake {
                link: i,
                reason: format!("{} transfers for {} tokens", l.transfers, total),
            });
        }
    }
    Ok(StreamReport { cycles, links, lines: line_usage(stages) })
}

fn worker(stage: &mut dyn Stage, rx: Receiver<PixelToken>, tx: SyncSender<PixelToken>, total: usize) -> Result<()> {
    let name = stage.kind().name();
    let hung = |what: &str| IspError::Worker(format!("{name} {what}"));
    let (mut received, mut sent) = (0usize, 0usize);
    while sent < total {
        stage.step();
        if let Some(t) = stage.take() {
            tx.send(t).map_err(|_| hung("lost its consumer"))?;
            sent += 1;
        } else if received < total && stage.ready() {
            let t = rx.recv().map_err(|_| hung("lost its producer"))?;
            stage.push(t)?;
            received += 1;
        } else {
            return Err(IspError::Deadlock { cycles: sent as u64 });
        }
    }
    Ok(())
}

/// Runs every stage on its own thread. Output order and values are the same
/// as [`run_polled`].
pub fn run_threaded(
    stages: &mut [Box<dyn Stage>],
    input: &[PixelToken],
    mut sink: impl FnMut(usize, PixelToken),
) -> Result<StreamReport> {
    let total = input.len();
    let outcome = std::thread::scope(|scope| {
        let (src_tx, mut rx) = sync_channel::<PixelToken>(1);
        let feeder = scope.spawn(move || {
            for t in input {
                if src_tx.send(*t).is_err() {
                    break;
                }
            }
        });
        let mut handles = Vec::new();
        for stage in stages.iter_mut() {
            let (tx, next_rx) = sync_channel::<PixelToken>(1);
            let stage_rx = std::mem::replace(&mut rx, next_rx);
            handles.push(scope.spawn(move || worker(stage.as_mut(), stage_rx, tx, total)));
        }
        let mut delivered = 0;
        while delivered < total {
            match rx.recv() {
                Ok(t) => {
                    sink(delivered, t);
                    delivered += 1;
                }
                Err(_) => break,
            }
        }
        drop(rx);
        let mut first_err = None;
        for h in handles {
            let r = h.join().map_err(|_| IspError::Worker("stage thread panicked".into())).and_then(|r| r);
            if let Err(e) = r {
                // a real stage error outranks the disconnects it causes downstream
                if first_err.is_none() || matches!(first_err, Some(IspError::Worker(_))) {
                    first_err = Some(e);
                }
            }
        }
        let _ = feeder.join();
        match first_err {
            Some(e) => Err(e),
            None if delivered < total => Err(IspError::Worker(format!("only {delivered} of {total} tokens arrived"))),
            None => Ok(delivered),
        }
    });
    outcome?;
    let per_link = LinkStats { transfers: total as u64, stalls: 0 };
    Ok(StreamReport { cycles: 0, links: vec![per_link; stages.len() + 1], lines: line_usage(stages) })
}
