use super::token::check_flags;
use super::{IspError, PixelToken, Result};

/// A `kh x kw` neighbourhood of one output pixel, channel-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub kh: usize,
    pub kw: usize,
    pub channels: usize,
    /// Frame coordinates of the centre sample.
    pub y: usize,
    pub x: usize,
    pub data: Vec<i32>,
}

impl Window {
    pub fn new(kh: usize, kw: usize, channels: usize) -> Self {
        Window { kh, kw, channels, y: 0, x: 0, data: vec![0; kh * kw * channels] }
    }

    /// Builds a single-channel window from rows of samples.
    pub fn from_rows(rows: &[&[i32]]) -> Self {
        let kh = rows.len();
        let kw = rows[0].len();
        let mut w = Window::new(kh, kw, 1);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), kw, "ragged window");
            w.data[r * kw..(r + 1) * kw].copy_from_slice(row);
        }
        w.y = kh / 2;
        w.x = kw / 2;
        w
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> i32 {
        self.data[(c * self.kh + r) * self.kw + col]
    }

    #[inline]
    pub fn center(&self, c: usize) -> i32 {
        self.at(c, self.kh / 2, self.kw / 2)
    }

    pub fn channel(&self, c: usize) -> &[i32] {
        let n = self.kh * self.kw;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Ring of `kh` lines feeding a windowed stage, stored one plane per channel.
///
/// Input is accepted only while the next output still needs it, so at most
/// `kh` lines are ever live. The trigger for output pixel `(y, x)` is input
/// pixel `(min(y + rh, H-1), min(x + rw, W-1))`; borders replicate the
/// nearest sample.
#[derive(Debug, Clone)]
pub struct LineBuffer {
    width: usize,
    height: usize,
    kh: usize,
    kw: usize,
    channels: usize,
    lines: Vec<u16>,
    cols: Vec<usize>,
    received: usize,
    next_out: usize,
    /// `trigger(next_out)`, kept current by `emit`.
    next_trigger: usize,
    peak_lines: usize,
}

impl LineBuffer {
    pub fn new(width: usize, height: usize, kh: usize, kw: usize, channels: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(IspError::InvalidConfig(format!("window {kh}x{kw} must have odd sides")));
        }
        if width == 0 || height == 0 {
            return Err(IspError::InvalidConfig("frame must be at least 1x1".into()));
        }
        Ok(LineBuffer {
            width,
            height,
            kh,
            kw,
            channels,
            lines: vec![0; kh * width * channels],
            cols: vec![0; kw],
            received: 0,
            next_out: 0,
            next_trigger: 0,
            peak_lines: 0,
        }
        .rearmed())
    }

    fn rearmed(mut self) -> Self {
        self.next_trigger = self.trigger(0);
        self
    }

    fn total(&self) -> usize {
        self.width * self.height
    }

    /// Raster index of the last input pixel output `i` depends on.
    pub fn trigger(&self, i: usize) -> usize {
        let (y, x) = (i / self.width, i % self.width);
        let ty = (y + self.kh / 2).min(self.height - 1);
        let tx = (x + self.kw / 2).min(self.width - 1);
        ty * self.width + tx
    }

    /// True while the pending output still needs more input.
    pub fn ready(&self) -> bool {
        self.received <= self.next_trigger && self.received < self.total()
    }

    pub fn accept(&mut self, tok: &PixelToken) -> Result<()> {
        if !self.ready() {
            return Err(IspError::Framing { index: self.received, reason: "token pushed while not ready".into() });
        }
        check_flags(tok, self.received, self.width)?;
        let (y, x) = (self.received / self.width, self.received % self.width);
        let plane = self.kh * self.width;
        let base = (y % self.kh) * self.width + x;
        for c in 0..self.channels {
            self.lines[c * plane + base] = tok.value[c];
        }
        self.received += 1;
        let oldest = (self.next_out / self.width).saturating_sub(self.kh / 2);
        self.peak_lines = self.peak_lines.max(y + 1 - oldest.min(y));
        Ok(())
    }

    /// Whether the next output's neighbourhood is complete.
    pub fn output_ready(&self) -> bool {
        self.received > self.next_trigger
    }

    /// Fills `win` with the next output's neighbourhood and advances. Returns
    /// the raster index of that output. When the last output of a frame is
    /// taken the buffer rearms for the next frame.
    pub fn emit(&mut self, win: &mut Window) -> usize {
        debug_assert!(self.output_ready());
        let i = self.next_out;
        let (y, x) = (i / self.width, i % self.width);
        let (rh, rw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        win.y = y;
        win.x = x;
        let interior = x >= rw as usize && x + (rw as usize) < self.width;
        if !interior {
            for (col, slot) in self.cols.iter_mut().enumerate() {
                *slot = (x as isize + col as isize - rw).clamp(0, self.width as isize - 1) as usize;
            }
        }
        let plane = self.kh * self.width;
        let mut o = 0;
        for c in 0..self.channels {
            for r in 0..self.kh {
                let sy = (y as isize + r as isize - rh).clamp(0, self.height as isize - 1) as usize;
                let row = &self.lines[c * plane + (sy % self.kh) * self.width..][..self.width];
                let dst = &mut win.data[o..o + self.kw];
                if interior {
                    for (d, &v) in dst.iter_mut().zip(&row[x - rw as usize..x + rw as usize + 1]) {
                        *d = v as i32;
                    }
                } else {
                    for (d, &sx) in dst.iter_mut().zip(&self.cols) {
                        *d = row[sx] as i32;
                    }
                }
                o += self.kw;
            }
        }
        self.next_out += 1;
        if self.next_out == self.total() {
            self.received = 0;
            self.next_out = 0;
        }
        self.next_trigger = self.trigger(self.next_out);
        i
    }

    /// Samples held between the oldest line still referenced and the newest line written.
    pub fn peak_lines(&self) -> usize {
        self.peak_lines
    }

    pub fn capacity_lines(&self) -> usize {
        self.kh
    }

    pub fn buffered(&self) -> usize {
        self.received.saturating_sub((self.next_out / self.width).saturating_sub(self.kh / 2) * self.width)
    }

    pub fn window(&self) -> Window {
        Window::new(self.kh, self.kw, self.channels)
    }
}

/// Every `kh x kw` window of a single frame's token stream, in raster order.
pub fn window_former(
    stream: &[PixelToken],
    kw: usize,
    kh: usize,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<Vec<Window>> {
    let mut lb = LineBuffer::new(width, height, kh, kw, channels)?;
    let mut out = Vec::with_capacity(width * height);
    let mut input = stream.iter();
    while out.len() < width * height {
        if lb.output_ready() {
            let mut w = lb.window();
            lb.emit(&mut w);
            out.push(w);
        } else if let Some(t) = input.next() {
            lb.accept(t)?;
        } else {
            return Err(IspError::Framing { index: stream.len(), reason: "stream ended mid-frame".into() });
        }
    }
    if input.next().is_some() {
        return Err(IspError::Framing { index: width * height, reason: "trailing tokens after frame".into() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isp::{stream_from_frame, Frame};
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, 8, |y, x| (y * w + x) as u16)
    }

    #[test]
    fn constant_frame_gives_constant_windows() {
        let f = Frame::from_fn(7, 6, 8, |_, _| 42);
        for w in window_former(&stream_from_frame(&f), 5, 5, 7, 6, 1).unwrap() {
            assert!(w.data.iter().all(|&v| v == 42));
        }
    }

    #[test]
    fn interior_window_reproduces_frame() {
        let f = ramp(5, 5);
        let wins = window_former(&stream_from_frame(&f), 5, 5, 5, 5, 1).unwrap();
        let c = &wins[2 * 5 + 2];
        let expect: Vec<i32> = f.data.iter().map(|&v| v as i32).collect();
        assert_eq!(c.data, expect);
    }

    /// Independent oracle: pad the whole frame by replication, then slice.
    fn padded_window(f: &Frame, y: usize, x: usize, kh: usize, kw: usize) -> Vec<i32> {
        let (rh, rw) = (kh / 2, kw / 2);
        let pw = f.width + 2 * rw;
        let ph = f.height + 2 * rh;
        let mut padded = vec![0i32; pw * ph];
        for py in 0..ph {
            for px in 0..pw {
                let sy = py.saturating_sub(rh).min(f.height - 1);
                let sx = px.saturating_sub(rw).min(f.width - 1);
                padded[py * pw + px] = f.get(sy, sx, 0) as i32;
            }
        }
        let mut out = Vec::new();
        for r in 0..kh {
            for c in 0..kw {
                out.push(padded[(y + r) * pw + x + c]);
            }
        }
        out
    }

    #[test]
    fn corner_window_replicates_first_row_and_column() {
        let f = ramp(6, 4);
        let wins = window_former(&stream_from_frame(&f), 5, 5, 6, 4, 1).unwrap();
        assert_eq!(wins[0].data, padded_window(&f, 0, 0, 5, 5));
        assert!((0..3).all(|r| wins[0].at(0, r, 0) == 0));
    }

    #[test]
    fn framing_errors_are_detected() {
        let f = ramp(4, 3);
        let mut s = stream_from_frame(&f);
        s[0].sof = false;
        assert!(matches!(window_former(&s, 3, 3, 4, 3, 1), Err(IspError::Framing { index: 0, .. })));
        let s = stream_from_frame(&f);
        assert!(window_former(&s[..11], 3, 3, 4, 3, 1).is_err());
        assert!(LineBuffer::new(4, 3, 4, 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn windows_match_padded_oracle(w in 1usize..10, h in 1usize..10, kr in 0usize..4, kc in 0usize..4) {
            let (kh, kw) = (2 * kr + 1, 2 * kc + 1);
            let f = ramp(w, h);
            let wins = window_former(&stream_from_frame(&f), kw, kh, w, h, 1).unwrap();
            prop_assert_eq!(wins.len(), w * h);
            for (i, win) in wins.iter().enumerate() {
                prop_assert_eq!((win.y, win.x), (i / w, i % w));
                prop_assert_eq!(&win.data, &padded_window(&f, i / w, i % w, kh, kw));
            }
        }

        #[test]
        fn live_lines_never_exceed_window_height(w in 1usize..12, h in 1usize..12, kr in 0usize..4) {
            let kh = 2 * kr + 1;
            let f = ramp(w, h);
            let mut lb = LineBuffer::new(w, h, kh, 3, 1).unwrap();
            let mut win = lb.window();
            let s = stream_from_frame(&f);
            let mut it = s.iter();
            let mut emitted = 0;
            while emitted < w * h {
                if lb.output_ready() { lb.emit(&mut win); emitted += 1; } else { lb.accept(it.next().unwrap()).unwrap(); }
                prop_assert!(lb.buffered() <= kh * w);
            }
            prop_assert!(lb.peak_lines() <= kh);
        }
    }
}
