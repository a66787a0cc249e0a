//! Fixed-point helpers shared by the pipeline stages.
//!
//! Every rounding in the pixel path is round-half-up, i.e. `floor(x + 0.5)`,
//! including for negative intermediate values.

/// `round(x / 2^shift)` with ties going up. `shift` must be ≥ 1.
#[inline]
pub fn round_shift(x: i64, shift: u32) -> i64 {
    (x + (1i64 << (shift - 1))) >> shift
}

/// `round(num / den)` for non-negative integers with ties going up.
#[inline]
pub fn div_round(num: u64, den: u64) -> u64 {
    debug_assert!(den > 0);
    (2 * num + den) / (2 * den)
}

/// `floor(x + 0.5)` on reals, the float twin of [`round_shift`].
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

#[inline]
pub fn clamp_i64(x: i64, lo: i64, hi: i64) -> i64 {
    x.max(lo).min(hi)
}

/// Maximum value of a `bits`-wide unsigned sample.
#[inline]
pub fn max_sample(bits: u8) -> u16 {
    ((1u32 << bits) - 1) as u16
}

/// Unsigned 4.8 gain. 256 is unity, 4095 is the largest representable value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct GainQ8(pub u16);

impl Default for GainQ8 {
    fn default() -> Self {
        GainQ8::ONE
    }
}

impl GainQ8 {
    pub const ONE: GainQ8 = GainQ8(256);
    pub const MAX: GainQ8 = GainQ8(4095);

    /// Quantizes a real gain, rounding half up and saturating to the format.
    pub fn from_f64(g: f64) -> GainQ8 {
        let q = round_half_up(g * 256.0);
        GainQ8(q.clamp(0.0, Self::MAX.0 as f64) as u16)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 256.0
    }

    pub fn is_valid(self) -> bool {
        self <= Self::MAX
    }

    /// `clamp(round(value * gain), 0, max)`.
    #[inline]
    pub fn apply(self, value: u16, max: u16) -> u16 {
        let v = (value as u32 * self.0 as u32 + 128) >> 8;
        v.min(max as u32) as u16
    }
}
