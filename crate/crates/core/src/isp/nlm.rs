//! Non-local means with a 256-entry exponential weight table.
//!
//! The normalised patch distance `x = d2 / (h^2 P)` is sampled at steps of
//! 1/32 over `[0, 8)`, so the table index is `floor(32 x)` capped at 255 and
//! the weight is `round(255 exp(-index / 32))`.

use super::{IspError, Result, Window};
use crate::fixed::round_half_up;

pub const NLM_LUT_SIZE: usize = 256;
const STEPS_PER_UNIT: f64 = 32.0;
const DIRECT_LIMIT: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct NlmLut {
    pub h: f64,
    pub patch_pixels: u32,
    denom: f64,
    weights: [u8; NLM_LUT_SIZE],
    /// `bounds[j]` is the smallest distance whose index is at least `j + 1`.
    bounds: [u64; NLM_LUT_SIZE - 1],
    inv: f64,
    /// Weight by distance for every distance below the last bound, when that is small.
    direct: Vec<u8>,
}

impl NlmLut {
    pub fn new(h: f64, patch_radius: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(IspError::InvalidConfig(format!("NLM strength {h} must be a positive number")));
        }
        let side = 2 * patch_radius as u32 + 1;
        let patch_pixels = side * side;
        let weights = std::array::from_fn(|j| round_half_up(255.0 * (-(j as f64) / STEPS_PER_UNIT).exp()) as u8);
        let denom = h * h * patch_pixels as f64;
        let mut lut = NlmLut { h, patch_pixels, denom, weights, bounds: [0; NLM_LUT_SIZE - 1], inv: STEPS_PER_UNIT / denom, direct: Vec::new() };
        for j in 0..NLM_LUT_SIZE - 1 {
            let (mut lo, mut hi) = (0u64, u64::MAX);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if lut.index(mid) > j {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            lut.bounds[j] = lo;
        }
        let last = lut.bounds[NLM_LUT_SIZE - 2];
        if last <= DIRECT_LIMIT {
            lut.direct = (0..last).map(|d2| lut.weights[lut.fast_index(d2)]).collect();
        }
        Ok(lut)
    }

    /// `floor(32 d2 / (h^2 P))`, capped at 255.
    #[inline]
    pub fn index(&self, d2: u64) -> usize {
        let x = d2 as f64 * STEPS_PER_UNIT / self.denom;
        if x >= (NLM_LUT_SIZE - 1) as f64 {
            NLM_LUT_SIZE - 1
        } else {
            x as usize
        }
    }

    /// Same as [`NlmLut::index`], estimated with a multiply and corrected
    /// against the precomputed bounds.
    #[inline]
    fn fast_index(&self, d2: u64) -> usize {
        let mut j = ((d2 as f64 * self.inv) as usize).min(NLM_LUT_SIZE - 1);
        while j > 0 && d2 < self.bounds[j - 1] {
            j -= 1;
        }
        while j < NLM_LUT_SIZE - 1 && d2 >= self.bounds[j] {
            j += 1;
        }
        j
    }

    #[inline]
    pub fn weight(&self, d2: u64) -> u8 {
        match self.direct.get(d2 as usize) {
            Some(&w) if d2 <= DIRECT_LIMIT => w,
            _ if !self.direct.is_empty() => self.weights[NLM_LUT_SIZE - 1],
            _ => self.weights[self.fast_index(d2)],
        }
    }

    pub fn table(&self) -> &[u8; NLM_LUT_SIZE] {
        &self.weights
    }
}

/// Weight for a squared patch distance, building a one-off table.
pub fn nlm_weight(d2: u64, h: f64, patch_radius: usize) -> Result<u8> {
    Ok(NlmLut::new(h, patch_radius)?.weight(d2))
}

/// Filtered centre of one channel of a `(2s + 2r + 1)^2` window. Returns the
/// new value, the sum of weights and the number of candidates.
pub fn nlm_filter(w: &Window, channel: usize, patch_radius: usize, search_radius: usize, lut: &NlmLut) -> (u16, u64, u64) {
    match patch_radius {
        0 => filter_fixed::<1>(w, channel, search_radius, lut),
        1 => filter_fixed::<3>(w, channel, search_radius, lut),
        2 => filter_fixed::<5>(w, channel, search_radius, lut),
        3 => filter_fixed::<7>(w, channel, search_radius, lut),
        r => filter_any(w, channel, r, search_radius, lut),
    }
}

#[inline(always)]
fn accumulate(data: &[i32], side: usize, r: usize, s: usize, mut dist: impl FnMut(usize) -> u64, lut: &NlmLut) -> (u16, u64, u64) {
    let (mut num, mut den) = (0u64, 0u64);
    for cy in 0..2 * s + 1 {
        for cx in 0..2 * s + 1 {
            let cand = cy * side + cx;
            let wt = lut.weight(dist(cand)) as u64;
            num += wt * data[cand + r * side + r] as u64;
            den += wt;
        }
    }
    let n = ((2 * s + 1) * (2 * s + 1)) as u64;
    // the centre always contributes weight 255, so den > 0
    (((2 * num + den) / (2 * den)) as u16, den, n)
}

fn filter_fixed<const PW: usize>(w: &Window, channel: usize, s: usize, lut: &NlmLut) -> (u16, u64, u64) {
    let r = PW / 2;
    let side = 2 * (s + r) + 1;
    debug_assert!(w.kh == side && w.kw == side);
    let data = w.channel(channel);
    // top-left corner of the reference patch
    let refp = s * side + s;
    let mut reference = [[0i64; PW]; PW];
    for (py, row) in reference.iter_mut().enumerate() {
        for (px, v) in row.iter_mut().enumerate() {
            *v = data[refp + py * side + px] as i64;
        }
    }
    let dist = |cand: usize| {
        let patch = &data[cand..cand + (PW - 1) * side + PW];
        let mut d2 = 0i64;
        for (py, row) in reference.iter().enumerate() {
            let b: &[i32; PW] = patch[py * side..py * side + PW].try_into().unwrap();
            for px in 0..PW {
                let d = row[px] - b[px] as i64;
                d2 += d * d;
            }
        }
        d2 as u64
    };
    accumulate(data, side, r, s, dist, lut)
}

fn filter_any(w: &Window, channel: usize, r: usize, s: usize, lut: &NlmLut) -> (u16, u64, u64) {
    let side = 2 * (s + r) + 1;
    let pw = 2 * r + 1;
    let data = w.channel(channel);
    let refp = s * side + s;
    let dist = |cand: usize| {
        let mut d2 = 0u64;
        for py in 0..pw {
            let a = &data[refp + py * side..refp + py * side + pw];
            let b = &data[cand + py * side..cand + py * side + pw];
            for (&u, &v) in a.iter().zip(b) {
                let d = (u - v) as i64;
                d2 += (d * d) as u64;
            }
        }
        d2
    };
    accumulate(data, side, r, s, dist, lut)
}

/// [`nlm_filter`] for a raster sequence of windows. When a window sits one
/// column right of the previous one the patch distances are updated by
/// dropping the leftmost patch column and adding the new rightmost one, so
/// each candidate costs one column instead of a whole patch.
#[derive(Debug, Clone)]
pub(crate) struct NlmSlider {
    r: usize,
    s: usize,
    side: usize,
    channels: usize,
    cands: usize,
    /// Per channel and candidate, the column sums of its patch distance as a ring of `2r + 1`.
    cols: Vec<u64>,
    dist: Vec<u64>,
    head: usize,
    last: Option<(usize, usize)>,
    slide: bool,
}

impl NlmSlider {
    pub(crate) fn new(patch_radius: usize, search_radius: usize, channels: usize) -> Self {
        let (r, s) = (patch_radius, search_radius);
        let cands = (2 * s + 1) * (2 * s + 1);
        NlmSlider {
            r,
            s,
            side: 2 * (s + r) + 1,
            channels,
            cands,
            cols: vec![0; channels * cands * (2 * r + 1)],
            dist: vec![0; channels * cands],
            head: 0,
            last: None,
            slide: false,
        }
    }

    /// Starts a new window; call before filtering its channels.
    pub(crate) fn begin(&mut self, w: &Window) {
        debug_assert!(w.kh == self.side && w.kw == self.side && w.channels == self.channels);
        self.slide = w.x > 0 && self.last == Some((w.y, w.x - 1));
        if self.slide {
            self.head = (self.head + 1) % (2 * self.r + 1);
        } else {
            self.head = 0;
        }
        self.last = Some((w.y, w.x));
    }

    pub(crate) fn filter(&mut self, w: &Window, channel: usize, lut: &NlmLut) -> (u16, u64, u64) {
        match self.r {
            0 => self.filter_fixed::<1>(w, channel, lut),
            1 => self.filter_fixed::<3>(w, channel, lut),
            2 => self.filter_fixed::<5>(w, channel, lut),
            3 => self.filter_fixed::<7>(w, channel, lut),
            r => nlm_filter(w, channel, r, self.s, lut),
        }
    }

    fn filter_fixed<const PW: usize>(&mut self, w: &Window, channel: usize, lut: &NlmLut) -> (u16, u64, u64) {
        let (s, side) = (self.s, self.side);
        let data = w.channel(channel);
        let refp = s * side + s;
        let span = 2 * s + 1;
        let cols = &mut self.cols[channel * self.cands * PW..(channel + 1) * self.cands * PW];
        let dist = &mut self.dist[channel * self.cands..(channel + 1) * self.cands];
        let (mut num, mut den) = (0u64, 0u64);
        // after the advance, the ring slot just vacated by column 0 holds column PW - 1
        let slot = (self.head + PW - 1) % PW;
        let mut reference = [[0i64; PW]; PW];
        for (j, col) in reference.iter_mut().enumerate() {
            for (py, v) in col.iter_mut().enumerate() {
                *v = data[refp + py * side + j] as i64;
            }
        }
        let mut k = 0;
        for cy in 0..span {
            let rows: [&[i32]; PW] = std::array::from_fn(|py| &data[(cy + py) * side..(cy + py + 1) * side]);
            for cx in 0..span {
                let column = |j: usize| {
                    let mut acc = 0i64;
                    for py in 0..PW {
                        let d = reference[j][py] - rows[py][cx + j] as i64;
                        acc += d * d;
                    }
                    acc as u64
                };
                let ring: &mut [u64; PW] = (&mut cols[k * PW..(k + 1) * PW]).try_into().unwrap();
                let d2 = if self.slide {
                    let fresh = column(PW - 1);
                    let d2 = dist[k] - ring[slot] + fresh;
                    ring[slot] = fresh;
                    d2
                } else {
                    let mut total = 0;
                    for (j, c) in ring.iter_mut().enumerate() {
                        *c = column(j);
                        total += *c;
                    }
                    total
                };
                dist[k] = d2;
                let wt = lut.weight(d2) as u64;
                num += wt * rows[PW / 2][cx + PW / 2] as u64;
                den += wt;
                k += 1;
            }
        }
        (((2 * num + den) / (2 * den)) as u16, den, self.cands as u64)
    }
}
