//! DVS event streams: parsing, fixed-window segmentation and voxel encoding.

mod io;
pub mod synth;

pub use io::{
    load_events, read_events_bin, read_events_csv, save_events, write_events_bin,
    write_events_csv, EVENT_MAGIC,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("malformed event record {record:?}: {reason}")]
    MalformedRecord { record: String, reason: String },
    #[error("event field out of range: {0}")]
    OutOfRange(String),
    #[error("timestamps must be non-decreasing (event {index}: {t} < {prev})")]
    NonMonotonic { index: usize, t: u64, prev: u64 },
    #[error("window duration must be positive")]
    InvalidDuration,
    #[error("bin count must be at least 1")]
    InvalidBins,
    #[error("event stream is empty")]
    EmptyStream,
    #[error("event at t={t} lies outside [{start}, {end})")]
    OutsideWindow { t: u64, start: u64, end: u64 },
    #[error("event ({x}, {y}) exceeds grid dims {width}x{height}")]
    DimensionMismatch { x: u32, y: u32, width: u32, height: u32 },
    #[error("bad event file magic")]
    BadMagic,
    #[error("timestamp {0} does not fit the 32-bit binary format")]
    TimestampOverflow(u64),
    #[error("event file needs sensor dimensions")]
    MissingDims,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EventError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorDims {
    pub width: u32,
    pub height: u32,
}

impl SensorDims {
    pub fn new(width: u32, height: u32) -> Self {
        SensorDims { width, height }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_bit(p: u64) -> Option<Polarity> {
        match p {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// One brightness-change event: timestamp in µs, pixel, polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DvsEvent {
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub p: Polarity,
}

impl DvsEvent {
    pub fn new(t: u64, x: u32, y: u32, p: Polarity) -> Self {
        DvsEvent { t, x, y, p }
    }
}

/// Formats an event as a `t,x,y,p` record.
pub fn format_event_record(e: &DvsEvent) -> String {
    format!("{},{},{},{}", e.t, e.x, e.y, e.p.index())
}

/// Parses one `t,x,y,p` record and validates it against the sensor.
pub fn parse_event_record(record: &str, dims: SensorDims) -> Result<DvsEvent> {
    let malformed = |reason: &str| EventError::MalformedRecord {
        record: record.to_string(),
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = record.trim().split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(malformed(&format!("expected 4 fields, got {}", fields.len())));
    }
    let mut vals = [0u64; 4];
    for (v, f) in vals.iter_mut().zip(&fields) {
        *v = f
            .parse::<u64>()
            .map_err(|_| malformed(&format!("{f:?} is not a non-negative integer")))?;
    }
    let [t, x, y, p] = vals;
    let p = Polarity::from_bit(p).ok_or_else(|| EventError::OutOfRange(format!("polarity {p}")))?;
    if x >= dims.width as u64 || y >= dims.height as u64 {
        return Err(EventError::OutOfRange(format!(
            "({x}, {y}) outside {}x{} sensor",
            dims.width, dims.height
        )));
    }
    Ok(DvsEvent::new(t, x as u32, y as u32, p))
}

/// Checks that timestamps never decrease.
pub fn check_monotonic(events: &[DvsEvent]) -> Result<()> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(EventError::NonMonotonic { index: i + 1, t: w[1].t, prev: w[0].t });
        }
    }
    Ok(())
}

/// Events falling in `[start, start + duration)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub start: u64,
    pub duration: u64,
    pub events: Vec<DvsEvent>,
}

impl EventWindow {
    pub fn new(start: u64, duration: u64) -> Self {
        EventWindow { start, duration, events: Vec::new() }
    }

    pub fn end(&self) -> u64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Cuts a stream into contiguous windows of `duration` µs starting at the
/// first event. Silent windows between active ones are kept.
pub fn window_segment(stream: &[DvsEvent], duration: u64) -> Result<Vec<EventWindow>> {
    if duration == 0 {
        return Err(EventError::InvalidDuration);
    }
    match (stream.first(), stream.last()) {
        (Some(first), Some(last)) => window_segment_span(stream, duration, first.t, last.t + 1),
        _ => Ok(Vec::new()),
    }
}

/// Like [`window_segment`] but errors on an empty stream.
pub fn window_segment_nonempty(stream: &[DvsEvent], duration: u64) -> Result<Vec<EventWindow>> {
    if stream.is_empty() {
        return Err(EventError::EmptyStream);
    }
    window_segment(stream, duration)
}

/// Tiles `[start, end)` with windows of `duration` µs (the last one may reach
/// past `end`). Every event must lie inside the span.
pub fn window_segment_span(
    stream: &[DvsEvent],
    duration: u64,
    start: u64,
    end: u64,
) -> Result<Vec<EventWindow>> {
    if duration == 0 {
        return Err(EventError::InvalidDuration);
    }
    check_monotonic(stream)?;
    let count = end.saturating_sub(start).div_ceil(duration) as usize;
    let mut windows: Vec<EventWindow> =
        (0..count).map(|k| EventWindow::new(start + k as u64 * duration, duration)).collect();
    let span_end = start + count as u64 * duration;
    for e in stream {
        if e.t < start || e.t >= span_end {
            return Err(EventError::OutsideWindow { t: e.t, start, end: span_end });
        }
        let k = ((e.t - start) / duration) as usize;
        windows[k].events.push(*e);
    }
    Ok(windows)
}

/// Binary occupancy tensor laid out as `[bins][polarity][y][x]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub bins: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl VoxelGrid {
    pub const POLARITIES: usize = 2;

    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        VoxelGrid { bins, height, width, data: vec![0; bins * Self::POLARITIES * height * width] }
    }

    #[inline]
    pub fn index(&self, b: usize, p: usize, y: usize, x: usize) -> usize {
        ((b * Self::POLARITIES + p) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, b: usize, p: usize, y: usize, x: usize) -> u8 {
        self.data[self.index(b, p, y, x)]
    }

    /// The `[polarity][y][x]` slice of one temporal bin.
    pub fn bin(&self, b: usize) -> &[u8] {
        let n = Self::POLARITIES * self.height * self.width;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&c| c != 0).count()
    }
}

/// Temporal bin of `t` inside a window: `floor((t - start) * bins / duration)`,
/// clamped to the last bin.
#[inline]
pub fn bin_index(t: u64, start: u64, duration: u64, bins: usize) -> usize {
    let b = ((t - start) as u128 * bins as u128 / duration as u128) as usize;
    b.min(bins - 1)
}

/// One-hot voxel encoding of a window. Repeated events saturate at 1.
pub fn voxelize(window: &EventWindow, bins: usize, dims: SensorDims) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(EventError::InvalidBins);
    }
    if window.duration == 0 {
        return Err(EventError::InvalidDuration);
    }
    let mut grid = VoxelGrid::zeros(bins, dims.height as usize, dims.width as usize);
    for e in &window.events {
        if !window.contains(e.t) {
            return Err(EventError::OutsideWindow { t: e.t, start: window.start, end: window.end() });
        }
        if !dims.contains(e.x, e.y) {
            return Err(EventError::DimensionMismatch {
                x: e.x,
                y: e.y,
                width: dims.width,
                height: dims.height,
            });
        }
        let b = bin_index(e.t, window.start, window.duration, bins);
        let i = grid.index(b, e.p.index(), e.y as usize, e.x as usize);
        grid.data[i] = 1;
    }
    Ok(grid)
}
