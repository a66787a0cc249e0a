//! Gray-world white balance with exposure exclusion.
//!
//! Statistics are gathered while frame N streams through; the gains derived
//! from them are applied from frame N+1 on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BayerPattern, PixelToken};
use crate::fixed::GainQ8;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AwbError {
    #[error("every pixel was outside the exclusion thresholds")]
    AllPixelsExcluded,
    #[error("a colour channel has zero mean")]
    DegenerateChannel,
}

/// Per-channel (R, G, B) sums and counts of included Bayer samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AwbStats {
    pub sums: [u64; 3],
    pub counts: [u64; 3],
}

impl AwbStats {
    #[inline]
    pub fn add(&mut self, channel: usize, v: u16, low: u16, high: u16) {
        if v >= low && v <= high {
            self.sums[channel] += v as u64;
            self.counts[channel] += 1;
        }
    }

    pub fn included(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn means(&self) -> [Option<f64>; 3] {
        std::array::from_fn(|c| (self.counts[c] > 0).then(|| self.sums[c] as f64 / self.counts[c] as f64))
    }
}

pub fn awb_stats(tokens: &[PixelToken], width: usize, pattern: BayerPattern, low: u16, high: u16) -> AwbStats {
    let mut s = AwbStats::default();
    for (i, t) in tokens.iter().enumerate() {
        s.add(pattern.color_at(i / width, i % width).channel(), t.value[0], low, high);
    }
    s
}

/// Gray-world gains `(mG/mR, 1, mG/mB)` in U4.8, computed exactly from the
/// integer sums and rounded half up.
pub fn awb_gains(stats: &AwbStats) -> Result<[GainQ8; 3], AwbError> {
    if stats.included() == 0 {
        return Err(AwbError::AllPixelsExcluded);
    }
    if stats.sums.iter().zip(&stats.counts).any(|(&s, &c)| s == 0 || c == 0) {
        return Err(AwbError::DegenerateChannel);
    }
    let [sr, sg, sb] = stats.sums.map(|v| v as u128);
    let [cr, cg, cb] = stats.counts.map(|v| v as u128);
    let ratio = |s_other: u128, c_other: u128| {
        let num = 256 * sg * c_other;
        let den = cg * s_other;
        let q = (2 * num + den) / (2 * den);
        GainQ8(q.min(GainQ8::MAX.0 as u128) as u16)
    };
    Ok([ratio(sr, cr), GainQ8::ONE, ratio(sb, cb)])
}

/// Same rule from real-valued channel means.
pub fn awb_gains_from_means(means: [f64; 3]) -> Result<[GainQ8; 3], AwbError> {
    if means.iter().any(|&m| !(m > 0.0)) {
        return Err(AwbError::DegenerateChannel);
    }
    Ok([GainQ8::from_f64(means[1] / means[0]), GainQ8::ONE, GainQ8::from_f64(means[1] / means[2])])
}

#[inline]
pub fn awb_apply(value: u16, gains: &[GainQ8; 3], channel: usize, max: u16) -> u16 {
    gains[channel].apply(value, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isp::{stream_from_frame, Frame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats_of_means(m: [u64; 3]) -> AwbStats {
        AwbStats { sums: m, counts: [1, 1, 1] }
    }

    #[test]
    fn uniform_frame_is_neutral() {
        let f = Frame::from_fn(8, 8, 8, |_, _| 128);
        let s = awb_stats(&stream_from_frame(&f), 8, BayerPattern::RGGB, 10, 245);
        assert_eq!(s.counts, [16, 32, 16]);
        assert_eq!(s.means(), [Some(128.0); 3]);
        assert_eq!(awb_gains(&s).unwrap(), [GainQ8(256); 3]);
    }

    #[test]
    fn saturated_frame_is_excluded() {
        let f = Frame::from_fn(4, 4, 8, |_, _| 255);
        let s = awb_stats(&stream_from_frame(&f), 4, BayerPattern::RGGB, 10, 245);
        assert_eq!(s.included(), 0);
        assert_eq!(awb_gains(&s), Err(AwbError::AllPixelsExcluded));
    }

    #[test]
    fn mixed_frame_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Frame::from_fn(13, 9, 8, |_, _| rng.gen_range(0..=255));
        for p in BayerPattern::ALL {
            let s = awb_stats(&stream_from_frame(&f), 13, p, 30, 220);
            let mut sums = [0u64; 3];
            let mut counts = [0u64; 3];
            for y in 0..9 {
                for x in 0..13 {
                    let v = f.get(y, x, 0);
                    let c = match (p, y % 2, x % 2) {
                        (BayerPattern::RGGB, 0, 0) | (BayerPattern::BGGR, 1, 1) => 0,
                        (BayerPattern::GRBG, 0, 1) | (BayerPattern::GBRG, 1, 0) => 0,
                        (BayerPattern::RGGB, 1, 1) | (BayerPattern::BGGR, 0, 0) => 2,
                        (BayerPattern::GRBG, 1, 0) | (BayerPattern::GBRG, 0, 1) => 2,
                        _ => 1,
                    };
                    if (30..=220).contains(&v) {
                        sums[c] += v as u64;
                        counts[c] += 1;
                    }
                }
            }
            assert_eq!(s, AwbStats { sums, counts }, "{p:?}");
        }
    }

    #[test]
    fn gain_examples() {
        assert_eq!(awb_gains(&stats_of_means([64, 128, 128])).unwrap()[0], GainQ8(512));
        // 128 / 10000 * 256 = 3.2768
        assert_eq!(awb_gains(&stats_of_means([10000, 128, 128])).unwrap()[0], GainQ8(3));
        assert_eq!(awb_gains_from_means([10000.0, 128.0, 128.0]).unwrap()[0], GainQ8(3));
        assert_eq!(awb_gains_from_means([64.0, 128.0, 32.0]).unwrap(), [GainQ8(512), GainQ8(256), GainQ8(1024)]);
        // ratio 100 saturates to the largest U4.8 value
        assert_eq!(awb_gains(&stats_of_means([1, 100, 1])).unwrap()[0], GainQ8::MAX);
        assert_eq!(awb_gains(&AwbStats { sums: [0, 5, 5], counts: [1, 1, 1] }), Err(AwbError::DegenerateChannel));
        assert_eq!(awb_gains(&AwbStats { sums: [0, 5, 5], counts: [0, 1, 1] }), Err(AwbError::DegenerateChannel));
    }

    #[test]
    fn integer_and_float_gains_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let counts = [rng.gen_range(1..500u64), rng.gen_range(1..1000), rng.gen_range(1..500)];
            let sums = counts.map(|c| c * rng.gen_range(1..=255u64));
            let s = AwbStats { sums, counts };
            let means = s.means().map(Option::unwrap);
            let exact = awb_gains(&s).unwrap();
            let float = awb_gains_from_means(means).unwrap();
            for c in 0..3 {
                assert!(exact[c].0.abs_diff(float[c].0) <= 1);
            }
        }
    }

    #[test]
    fn apply_examples() {
        let g = [GainQ8(256), GainQ8(512), GainQ8(512)];
        assert_eq!(awb_apply(77, &g, 0, 255), 77);
        assert_eq!(awb_apply(100, &g, 1, 255), 200);
        assert_eq!(awb_apply(200, &g, 2, 255), 255);
        assert_eq!(awb_apply(200, &g, 2, 1023), 400);
        // 3 * 1.5 = 4.5 rounds up
        assert_eq!(awb_apply(3, &[GainQ8(384); 3], 0, 255), 5);
    }
}
