//! RGB to studio-swing YCbCr in S1.14 fixed point, plus luma sharpening.

use serde::{Deserialize, Serialize};

use super::{IspError, Result, Window};
use crate::fixed::{max_sample, round_shift};

pub const CSC_FRAC_BITS: u32 = 14;

/// Rows produce Y, Cb, Cr from (R, G, B). Coefficients are S1.14.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CscMatrix {
    pub coeffs: [[i32; 3]; 3],
    pub offsets: [i32; 3],
}

impl Default for CscMatrix {
    /// BT.601 studio swing.
    fn default() -> Self {
        CscMatrix {
            coeffs: [[4211, 8258, 1606], [-2425, -4768, 7193], [7193, -6029, -1163]],
            offsets: [16, 128, 128],
        }
    }
}

impl CscMatrix {
    pub fn validate(&self) -> Result<()> {
        // S1.14 spans [-2, 2)
        let lim = 2 << CSC_FRAC_BITS;
        if self.coeffs.iter().flatten().any(|&c| c < -lim || c >= lim) {
            return Err(IspError::InvalidConfig("CSC coefficient outside S1.14 range".into()));
        }
        if self.offsets.iter().any(|&o| !(0..=255).contains(&o)) {
            return Err(IspError::InvalidConfig("CSC offsets must be 8-bit".into()));
        }
        Ok(())
    }
}

const Y_RANGE: (i64, i64) = (16, 235);
const C_RANGE: (i64, i64) = (16, 240);

/// Converts one `bit_depth`-bit RGB triple to 8-bit YCbCr. Other depths are
/// rescaled by `255 / max` in the same rounding step as the S1.14 products.
pub fn rgb_to_ycbcr(rgb: [u16; 3], m: &CscMatrix, bit_depth: u8) -> [u16; 3] {
    let max = max_sample(bit_depth) as i64;
    let den = max << CSC_FRAC_BITS;
    std::array::from_fn(|row| {
        let acc: i64 = (0..3).map(|c| m.coeffs[row][c] as i64 * rgb[c] as i64).sum();
        let (lo, hi) = if row == 0 { Y_RANGE } else { C_RANGE };
        // round half up of acc * 255 / den
        let v = if max == 255 { round_shift(acc, CSC_FRAC_BITS) } else { (2 * acc * 255 + den).div_euclid(2 * den) };
        (v + m.offsets[row] as i64).clamp(lo, hi) as u16
    })
}

/// Inverse BT.601 studio-swing transform, used only to view YCbCr output as RGB.
pub fn ycbcr_to_rgb(ycc: [u16; 3]) -> [u16; 3] {
    let y = ycc[0] as i64 - 16;
    let cb = ycc[1] as i64 - 128;
    let cr = ycc[2] as i64 - 128;
    let conv = |a: i64, b: i64, c: i64| round_shift(a * y + b * cb + c * cr, CSC_FRAC_BITS).clamp(0, 255) as u16;
    [conv(19071, 0, 26149), conv(19071, -6423, -13320), conv(19071, 33046, 0)]
}

/// 3x3 binomial blur, sum 16.
pub const BLUR_3X3: [[i32; 3]; 3] = [[1, 2, 1], [2, 4, 2], [1, 2, 1]];

/// Unsharp mask on luma: `y + round(lambda (y - blur))`, clamped to the
/// studio range. `lambda` is U2.6.
pub fn sharpen_luma(w: &Window, lambda: u8) -> u16 {
    debug_assert!(w.kh == 3 && w.kw == 3);
    let y = w.center(0) as i64;
    let mut blur16 = 0i64;
    for (r, row) in BLUR_3X3.iter().enumerate() {
        for (c, &k) in row.iter().enumerate() {
            blur16 += k as i64 * w.at(0, r, c) as i64;
        }
    }
    // lambda/64 * diff16/16
    let delta = round_shift(lambda as i64 * (16 * y - blur16), 10);
    (y + delta).clamp(Y_RANGE.0, Y_RANGE.1) as u16
}
