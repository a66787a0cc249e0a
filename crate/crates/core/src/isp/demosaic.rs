//! Malvar-He-Cutler gradient-corrected bilinear demosaicing.
//!
//! The published kernels have half-integer taps over a divisor of 8. They are
//! stored here doubled, so taps are integers and the divisor is 16.

use super::{CfaColor, Window};
use crate::fixed::round_shift;

/// Kernel outputs are `dot >> MHC_SHIFT` with rounding.
pub const MHC_SHIFT: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MhcKernel {
    pub name: &'static str,
    pub taps: [[i32; 5]; 5],
}

const G_AT_RB: [[i32; 5]; 5] = [
    [0, 0, -2, 0, 0],
    [0, 0, 4, 0, 0],
    [-2, 4, 8, 4, -2],
    [0, 0, 4, 0, 0],
    [0, 0, -2, 0, 0],
];

/// Missing colour sits left and right of the centre.
const SAME_ROW: [[i32; 5]; 5] = [
    [0, 0, 1, 0, 0],
    [0, -2, 0, -2, 0],
    [-2, 8, 10, 8, -2],
    [0, -2, 0, -2, 0],
    [0, 0, 1, 0, 0],
];

/// Missing colour sits above and below the centre.
const SAME_COL: [[i32; 5]; 5] = [
    [0, 0, -2, 0, 0],
    [0, -2, 8, -2, 0],
    [1, 0, 10, 0, 1],
    [0, -2, 8, -2, 0],
    [0, 0, -2, 0, 0],
];

const RB_AT_BR: [[i32; 5]; 5] = [
    [0, 0, -3, 0, 0],
    [0, 4, 0, 4, 0],
    [-3, 0, 12, 0, -3],
    [0, 4, 0, 4, 0],
    [0, 0, -3, 0, 0],
];

pub const MHC_KERNELS: [MhcKernel; 8] = [
    MhcKernel { name: "G at R", taps: G_AT_RB },
    MhcKernel { name: "G at B", taps: G_AT_RB },
    MhcKernel { name: "R at G (red row)", taps: SAME_ROW },
    MhcKernel { name: "R at G (blue row)", taps: SAME_COL },
    MhcKernel { name: "B at G (blue row)", taps: SAME_ROW },
    MhcKernel { name: "B at G (red row)", taps: SAME_COL },
    MhcKernel { name: "R at B", taps: RB_AT_BR },
    MhcKernel { name: "B at R", taps: RB_AT_BR },
];

/// Kernel interpolating `channel` (0 = R, 1 = G, 2 = B) at a site, or `None`
/// when the site measures that channel directly.
pub fn kernel_for(site: CfaColor, channel: usize) -> Option<&'static MhcKernel> {
    use CfaColor::*;
    let k = match (site, channel) {
        (R, 1) => 0,
        (B, 1) => 1,
        (Gr, 0) => 2,
        (Gb, 0) => 3,
        (Gb, 2) => 4,
        (Gr, 2) => 5,
        (B, 0) => 6,
        (R, 2) => 7,
        _ => return None,
    };
    Some(&MHC_KERNELS[k])
}

/// Full (R, G, B) for the centre of a 5x5 Bayer window.
pub fn demosaic_pixel(w: &Window, site: CfaColor, max: u16) -> [u16; 3] {
    debug_assert!(w.kh == 5 && w.kw == 5);
    std::array::from_fn(|ch| match kernel_for(site, ch) {
        None => w.center(0) as u16,
        Some(k) => {
            let mut dot = 0i64;
            for (r, row) in k.taps.iter().enumerate() {
                for (c, &tap) in row.iter().enumerate() {
                    if tap != 0 {
                        dot += (tap * w.at(0, r, c)) as i64;
                    }
                }
            }
            round_shift(dot, MHC_SHIFT).clamp(0, max as i64) as u16
        }
    })
}
