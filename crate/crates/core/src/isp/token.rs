use super::{Frame, FrameFormat, IspError, Result};

/// One pixel on a stream link. Bayer tokens use `value[0]` only; tokens after
/// demosaicing carry an (R, G, B) or (Y, Cb, Cr) triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelToken {
    pub value: [u16; 3],
    pub sof: bool,
    pub eol: bool,
}

impl PixelToken {
    pub fn mono(v: u16, sof: bool, eol: bool) -> Self {
        PixelToken { value: [v, 0, 0], sof, eol }
    }

    /// Framing flags for raster index `i` of a `width`-wide frame.
    #[inline]
    pub fn flags_for(i: usize, width: usize) -> (bool, bool) {
        (i == 0, i % width == width - 1)
    }
}

/// Raster-order tokens of a frame with start-of-frame and end-of-line flags.
pub fn stream_from_frame(frame: &Frame) -> Vec<PixelToken> {
    let ch = frame.channels();
    (0..frame.width * frame.height)
        .map(|i| {
            let (sof, eol) = PixelToken::flags_for(i, frame.width);
            let mut value = [0u16; 3];
            value[..ch].copy_from_slice(&frame.data[i * ch..(i + 1) * ch]);
            PixelToken { value, sof, eol }
        })
        .collect()
}

/// Reassembles a frame, checking that the framing flags agree with the
/// declared geometry.
pub fn frame_from_stream(
    tokens: &[PixelToken],
    width: usize,
    height: usize,
    bit_depth: u8,
    format: FrameFormat,
) -> Result<Frame> {
    if tokens.len() != width * height {
        return Err(IspError::Framing {
            index: tokens.len().min(width * height),
            reason: format!("expected {} tokens, got {}", width * height, tokens.len()),
        });
    }
    let mut frame = Frame::new(width, height, bit_depth, format);
    let ch = format.channels();
    for (i, t) in tokens.iter().enumerate() {
        check_flags(t, i, width)?;
        frame.data[i * ch..(i + 1) * ch].copy_from_slice(&t.value[..ch]);
    }
    Ok(frame)
}

pub(crate) fn check_flags(t: &PixelToken, i: usize, width: usize) -> Result<()> {
    let (sof, eol) = PixelToken::flags_for(i, width);
    if t.sof != sof {
        return Err(IspError::Framing { index: i, reason: format!("sof={} expected {}", t.sof, sof) });
    }
    if t.eol != eol {
        return Err(IspError::Framing { index: i, reason: format!("eol={} expected {}", t.eol, eol) });
    }
    Ok(())
}
