use super::{IspError, Result};
use crate::fixed::{max_sample, round_half_up};

/// `LUT[i] = round((i / max)^(1/gamma) * max)` over all `2^depth` codes.
pub fn gamma_build_lut(gamma: f64, bit_depth: u8) -> Result<Vec<u16>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(IspError::InvalidConfig(format!("gamma exponent {gamma} must be a positive number")));
    }
    let max = max_sample(bit_depth) as f64;
    let inv = 1.0 / gamma;
    Ok((0..=max as u32)
        .map(|i| round_half_up((i as f64 / max).powf(inv) * max).clamp(0.0, max) as u16)
        .collect())
}

/// A gamma table together with the exponent it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLut {
    pub exponent: f64,
    pub table: Vec<u16>,
}

impl GammaLut {
    pub fn new(exponent: f64, bit_depth: u8) -> Result<Self> {
        Ok(GammaLut { exponent, table: gamma_build_lut(exponent, bit_depth)? })
    }

    #[inline]
    pub fn apply(&self, v: u16) -> u16 {
        self.table[v as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_gamma_is_identity() {
        for d in [8u8, 10, 12] {
            let lut = gamma_build_lut(1.0, d).unwrap();
            assert!(lut.iter().enumerate().all(|(i, &v)| v as usize == i));
        }
    }

    #[test]
    fn standard_gamma_midpoint() {
        assert_eq!(gamma_build_lut(2.2, 8).unwrap()[128], 186);
    }

    #[test]
    fn rejects_bad_exponents() {
        for g in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(gamma_build_lut(g, 8).is_err());
        }
    }

    proptest! {
        #[test]
        fn endpoints_fixed_and_monotone(gamma in 0.05f64..10.0, d in prop::sample::select(vec![8u8, 10, 12])) {
            let lut = gamma_build_lut(gamma, d).unwrap();
            prop_assert_eq!(lut.len(), 1usize << d);
            prop_assert_eq!(lut[0], 0);
            prop_assert_eq!(*lut.last().unwrap(), max_sample(d));
            prop_assert!(lut.windows(2).all(|p| p[0] <= p[1]));
        }
    }
}
