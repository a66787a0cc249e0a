use std::sync::mpsc::{channel, Receiver, Sender};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::{
    align_window, compute_region_activity, CogError, DirectiveQueue, DirectiveRecord, FrameAlignment, NpuDirective,
    Policy, PolicyConfig, Result,
};
use crate::events::{voxelize, window_segment_span, DvsEvent, EventWindow, SensorDims};
use crate::isp::{BayerPattern, Frame, IspConfig, IspPipeline, IspStats, Schedule};
use crate::snn::SpikingNet;

/// Everything one closed-loop run consumes.
#[derive(Debug, Clone)]
pub struct LoopInput<'a> {
    pub sensor: SensorDims,
    /// Time-ordered event stream.
    pub events: &'a [DvsEvent],
    /// Bayer frames with their exposure intervals `[t0, t1)` in µs.
    pub frames: &'a [(Frame, (u64, u64))],
    pub pattern: BayerPattern,
    pub net: &'a SpikingNet,
    pub isp: IspConfig,
    pub policy: PolicyConfig,
    pub window_us: u64,
    pub bins: usize,
    pub schedule: Schedule,
}

/// What happened around one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub exposure: (u64, u64),
    pub window_start: u64,
    pub overlap_us: u64,
    pub events: usize,
    pub active_cells: u64,
    pub class: usize,
    pub mean_luma: f64,
    /// Configuration revision the frame was rendered with.
    pub config_revision: u64,
    pub gamma: f64,
    pub nlm_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutput {
    pub frames: Vec<Frame>,
    pub stats: Vec<IspStats>,
    /// Every directive the NPU side issued, in order.
    pub log: Vec<DirectiveRecord>,
    pub records: Vec<FrameRecord>,
    /// Directives the ISP refused, with the reason. The configuration was
    /// left as it was.
    pub rejected: Vec<(u64, String)>,
}

impl LoopOutput {
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|r| r.to_json_line() + "\n").collect()
    }

    /// All output frames back to back, as written by [`Frame::to_bytes`].
    pub fn output_bytes(&self) -> Vec<u8> {
        self.frames.iter().flat_map(Frame::to_bytes).collect()
    }
}

/// Event windows tiling the union of the event stream and all exposures.
fn event_windows(input: &LoopInput) -> Result<Vec<EventWindow>> {
    let first_exposure = input.frames.iter().map(|(_, e)| e.0).min().unwrap_or(0);
    let last_exposure = input.frames.iter().map(|(_, e)| e.1).max().unwrap_or(0);
    let start = input.events.first().map_or(first_exposure, |e| e.t.min(first_exposure));
    let end = input.events.last().map_or(last_exposure, |e| (e.t + 1).max(last_exposure));
    Ok(window_segment_span(input.events, input.window_us, start, end)?)
}

fn check_input(input: &LoopInput) -> Result<()> {
    if input.frames.is_empty() {
        return Err(CogError::Scenario("no frames".into()));
    }
    let (w, h) = (input.frames[0].0.width, input.frames[0].0.height);
    if input.frames.iter().any(|(f, _)| (f.width, f.height, f.bit_depth) != (w, h, input.frames[0].0.bit_depth)) {
        return Err(CogError::Scenario("frames differ in geometry or bit depth".into()));
    }
    if input.frames.iter().any(|(_, (t0, t1))| t1 <= t0) {
        return Err(CogError::Scenario("empty exposure interval".into()));
    }
    if input.frames.windows(2).any(|p| p[1].1 .0 < p[0].1 .0) {
        return Err(CogError::Scenario("frames are not in exposure order".into()));
    }
    Ok(())
}

fn pipeline_for(input: &LoopInput) -> Result<IspPipeline> {
    let f = &input.frames[0].0;
    Ok(IspPipeline::new(input.isp.clone(), f.width, f.height, f.bit_depth, input.pattern)?)
}

/// Per-frame result of the NPU side before the ISP statistics arrive.
struct Perception {
    events: usize,
    activity: super::ActivityMap,
    class: usize,
}

fn perceive(input: &LoopInput, windows: &[EventWindow], a: &FrameAlignment) -> Result<Perception> {
    let w = &windows[a.window];
    let grid = voxelize(w, input.bins, input.sensor)?;
    let class = input.net.forward(&grid)?.predicted_class();
    let activity = compute_region_activity(&grid, input.policy.grid, w.duration);
    Ok(Perception { events: w.events.len(), activity, class })
}

/// Stats of a finished frame, sent from the ISP to the NPU side.
struct FrameDone {
    index: u64,
    stats: IspStats,
    config: IspConfig,
}

/// NPU side: perception for every frame, then one policy decision per
/// finished frame. Replies once per frame after any directive is queued.
fn npu_worker(
    input: &LoopInput,
    windows: &[EventWindow],
    alignments: &[FrameAlignment],
    stats_rx: Receiver<FrameDone>,
    directives: Sender<NpuDirective>,
    done: Sender<()>,
) -> Result<(Vec<DirectiveRecord>, Vec<Perception>)> {
    let mut policy = Policy::new(input.policy.clone());
    let mut log = Vec::new();
    let mut seen = Vec::with_capacity(alignments.len());
    for a in alignments {
        let p = perceive(input, windows, a)?;
        let Ok(FrameDone { index, stats, config }) = stats_rx.recv() else {
            return Err(CogError::Worker("ISP side hung up".into()));
        };
        if let Some(d) = policy.derive(&p.activity, &stats, &config, index, a.exposure.1) {
            debug!("frame {index}: directive {d:?}");
            log.push(DirectiveRecord { frame: index, directive: d.clone() });
            directives.send(d).map_err(|_| CogError::Worker("directive queue closed".into()))?;
        }
        seen.push(p);
        if done.send(()).is_err() {
            break;
        }
    }
    Ok((log, seen))
}

/// Runs every frame through the ISP while the NPU side watches the events
/// and steers the ISP configuration.
///
/// The two sides run on separate threads. After frame `i` the ISP hands its
/// statistics to the NPU side and, before starting frame `i + 1`, waits for
/// the NPU's answer for frame `i` and applies any directive. The result is
/// therefore identical for every thread interleaving.
pub fn run_closed_loop(input: &LoopInput) -> Result<LoopOutput> {
    check_input(input)?;
    let windows = event_windows(input)?;
    let alignments =
        input.frames.iter().map(|(_, e)| align_window(*e, &windows)).collect::<Result<Vec<_>>>()?;
    let mut pipeline = pipeline_for(input)?;
    let queue = DirectiveQueue::new();
    let (stats_tx, stats_rx) = channel();
    let (done_tx, done_rx) = channel();

    let (isp_side, npu_side) = std::thread::scope(|scope| {
        let directives = queue.sender();
        let (windows, alignments) = (&windows, &alignments);
        let npu = scope.spawn(move || npu_worker(input, windows, alignments, stats_rx, directives, done_tx));

        let mut isp = || -> Result<(Vec<Frame>, Vec<IspStats>, Vec<(u64, String)>)> {
            let (mut frames, mut stats, mut rejected) = (Vec::new(), Vec::new(), Vec::new());
            for (i, (frame, _)) in input.frames.iter().enumerate() {
                if i > 0 {
                    done_rx.recv().map_err(|_| CogError::Worker("NPU side stopped".into()))?;
                }
                for (d, outcome) in queue.drain_at_sof(&mut pipeline) {
                    if let Err(e) = outcome {
                        warn!("frame {i}: rejected {d:?}: {e}");
                        rejected.push((i as u64, e.to_string()));
                    }
                }
                let out = pipeline.run_frame(frame, &input.schedule)?;
                let msg = FrameDone { index: i as u64, stats: out.stats.clone(), config: pipeline.config().clone() };
                stats_tx.send(msg).map_err(|_| CogError::Worker("NPU side stopped".into()))?;
                frames.push(out.frame);
                stats.push(out.stats);
            }
            Ok((frames, stats, rejected))
        };
        let isp_side = isp();
        drop(stats_tx);
        let npu_side = npu.join().map_err(|_| CogError::Worker("NPU thread panicked".into()));
        (isp_side, npu_side)
    });
    // an NPU failure explains the ISP side's hang-up, so report it first
    let (log, seen) = npu_side??;
    let (frames, stats, rejected) = isp_side?;

    let records = stats
        .iter()
        .zip(&alignments)
        .zip(&seen)
        .enumerate()
        .map(|(i, ((s, a), p))| FrameRecord {
            frame: i as u64,
            exposure: a.exposure,
            window_start: windows[a.window].start,
            overlap_us: a.overlap,
            events: p.events,
            active_cells: p.activity.total_count(),
            class: p.class,
            mean_luma: s.mean_luma,
            config_revision: s.config_revision,
            gamma: s.gamma_exponent.unwrap_or(f64::NAN),
            nlm_strength: s.nlm.as_ref().map_or(f64::NAN, |n| n.h),
        })
        .collect();
    info!("closed loop: {} frames, {} directives", frames.len(), log.len());
    Ok(LoopOutput { frames, stats, log, records, rejected })
}

/// The same frames through a fixed configuration.
pub fn run_open_loop(input: &LoopInput) -> Result<LoopOutput> {
    check_input(input)?;
    let mut pipeline = pipeline_for(input)?;
    let (mut frames, mut stats) = (Vec::new(), Vec::new());
    for (frame, _) in input.frames {
        let out = pipeline.run_frame(frame, &input.schedule)?;
        frames.push(out.frame);
        stats.push(out.stats);
    }
    Ok(LoopOutput { frames, stats, log: Vec::new(), records: Vec::new(), rejected: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Polarity;
    use crate::snn::NetSpec;

    fn flat(level: u16) -> Frame {
        Frame::from_fn(16, 16, 8, |y, x| level + ((x + y) % 3) as u16)
    }

    fn frames(levels: &[u16], period: u64) -> Vec<(Frame, (u64, u64))> {
        levels.iter().enumerate().map(|(i, &l)| (flat(l), (i as u64 * period, (i as u64 + 1) * period))).collect()
    }

    fn input<'a>(net: &'a SpikingNet, events: &'a [DvsEvent], frames: &'a [(Frame, (u64, u64))]) -> LoopInput<'a> {
        LoopInput {
            sensor: SensorDims::new(16, 16),
            events,
            frames,
            pattern: BayerPattern::RGGB,
            net,
            isp: IspConfig::default(),
            policy: PolicyConfig::default(),
            window_us: 1000,
            bins: 4,
            schedule: Schedule::Polled,
        }
    }

    #[test]
    fn quiet_loop_matches_open_loop() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 1).unwrap();
        let fr = frames(&[110, 112, 111, 109], 1000);
        let inp = input(&net, &[], &fr);
        let closed = run_closed_loop(&inp).unwrap();
        let open = run_open_loop(&inp).unwrap();
        assert!(closed.log.is_empty());
        assert_eq!(closed.frames, open.frames);
        assert!(closed.records.iter().all(|r| r.config_revision == 0 && r.events == 0));
    }

    #[test]
    fn dark_frames_raise_gamma_from_the_next_frame() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 1).unwrap();
        let fr = frames(&[4, 4, 4], 1000);
        let events: Vec<DvsEvent> = (0..30).map(|i| DvsEvent::new(i * 100, (i % 16) as u32, 3, Polarity::On)).collect();
        let out = run_closed_loop(&input(&net, &events, &fr)).unwrap();
        assert!(out.stats[0].mean_luma < 60.0);
        assert_eq!(out.log[0].frame, 0);
        assert_eq!(out.log[0].directive.gamma, Some(2.4));
        assert_eq!(out.log[0].directive.t_us, 1000);
        assert_eq!(out.records[0].config_revision, 0);
        assert_eq!(out.records[1].config_revision, 1);
        assert_eq!(out.records[1].gamma, 2.4);
        assert!(out.records[1].mean_luma > out.records[0].mean_luma);
        assert_eq!(out.records[1].events, 10);
    }

    #[test]
    fn threaded_schedule_gives_the_same_loop() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 2).unwrap();
        let fr = frames(&[5, 5, 120, 200], 1000);
        let base = input(&net, &[], &fr);
        let a = run_closed_loop(&base).unwrap();
        let b = run_closed_loop(&LoopInput { schedule: Schedule::Threaded, ..base.clone() }).unwrap();
        assert_eq!(a, b);
        assert!(!a.log.is_empty());
    }

    #[test]
    fn frame_outside_the_event_span_still_gets_a_window() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 1).unwrap();
        let fr = frames(&[100, 100], 1000);
        let events = [DvsEvent::new(5000, 1, 1, Polarity::Off)];
        let out = run_closed_loop(&input(&net, &events, &fr)).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[1].window_start, 1000);
    }

    #[test]
    fn bad_inputs() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 1).unwrap();
        assert!(matches!(run_closed_loop(&input(&net, &[], &[])), Err(CogError::Scenario(_))));
        let mut fr = frames(&[100, 100], 1000);
        fr[1].1 = (500, 500);
        assert!(run_closed_loop(&input(&net, &[], &fr)).is_err());
        let fr = frames(&[100], 1000);
        let wrong = SpikingNet::from_spec(&NetSpec { input: [8, 8], ..Default::default() }, 1).unwrap();
        assert!(matches!(run_closed_loop(&input(&wrong, &[], &fr)), Err(CogError::Snn(_))));
    }
}
