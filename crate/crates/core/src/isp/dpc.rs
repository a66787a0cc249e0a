//! Defective pixel detection and correction on 5x5 Bayer windows.
//!
//! Same-colour neighbours of any Bayer site sit on the step-2 lattice of the
//! window, so the rule does not depend on the pattern phase.

use super::Window;

/// Same-colour neighbour pairs through the centre, as (row, col) in a 5x5
/// window: horizontal, vertical, main diagonal, anti-diagonal.
const PAIRS: [[(usize, usize); 2]; 4] = [
    [(2, 0), (2, 4)],
    [(0, 2), (4, 2)],
    [(0, 0), (4, 4)],
    [(0, 4), (4, 0)],
];

fn pair_values(w: &Window) -> [(i32, i32); 4] {
    PAIRS.map(|[a, b]| (w.at(0, a.0, a.1), w.at(0, b.0, b.1)))
}

/// A pixel is defective when it lies outside the range of its eight
/// same-colour neighbours and no directional pair explains it, meaning the
/// mean absolute difference to every pair exceeds `threshold`.
pub fn dpc_detect(w: &Window, threshold: u16) -> bool {
    debug_assert!(w.kh == 5 && w.kw == 5);
    let c = w.center(0);
    let pairs = pair_values(w);
    let lo = pairs.iter().map(|&(a, b)| a.min(b)).min().unwrap();
    let hi = pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap();
    if c <= hi && c >= lo {
        return false;
    }
    // mean of |c-a| and |c-b| exceeds T  <=>  their sum exceeds 2T
    let closest = pairs.iter().map(|&(a, b)| (c - a).abs() + (c - b).abs()).min().unwrap();
    closest > 2 * threshold as i32
}

/// Replacement value: the rounded mean of the pair that agrees best with
/// itself. Ties go to the earlier direction (H, V, D1, D2).
pub fn dpc_correct(w: &Window) -> u16 {
    let pairs = pair_values(w);
    let mut best = pairs[0];
    for &p in &pairs[1..] {
        if (p.0 - p.1).abs() < (best.0 - best.1).abs() {
            best = p;
        }
    }
    ((best.0 + best.1 + 1) >> 1) as u16
}
