//! Symmetric uniform quantization of codebooks with one scale per codebook.
//!
//! `v_hat = s * clamp(round(v / s), -2^(qb-1), 2^(qb-1) - 1)`, rounding half to
//! even. The scale is kept representable as an `f32` so that a container round
//! trip reproduces dequantized values bit for bit.

use crate::clustering::Codebook;
use crate::error::{Error, Result};

/// Number of candidate scales tried by [`ScaleMode::GridSearch`].
pub const GRID_CANDIDATES: u32 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// `s = max|v| / (2^(qb-1) - 1)`.
    #[default]
    AbsMax,
    /// Best of `s_absmax * i / 128` for `i in 1..=128` by codebook MSE.
    GridSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCodebook {
    k: usize,
    d: usize,
    values: Vec<i32>,
    scale: f32,
    bits: u32,
}

fn qrange(bits: u32) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

fn check_bits(bits: u32) -> Result<()> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidBits(bits));
    }
    Ok(())
}

/// Quantizes one value to its stored integer.
pub fn quantize_value(v: f64, scale: f64, bits: u32) -> i32 {
    let (lo, hi) = qrange(bits);
    (v / scale).round_ties_even().clamp(f64::from(lo), f64::from(hi)) as i32
}

impl QuantizedCodebook {
    /// Builds from stored integers, validating their range.
    pub fn new(k: usize, d: usize, values: Vec<i32>, scale: f32, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if k == 0 || d == 0 || values.len() != k * d {
            return Err(Error::DimensionMismatch(format!(
                "quantized codebook {k}x{d} with {} values",
                values.len()
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
        }
        let (lo, hi) = qrange(bits);
        if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "stored value {v} outside [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            k,
            d,
            values,
            scale,
            bits,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Storage cost `k * d * qb` in bits.
    pub fn payload_bits(&self) -> u64 {
        (self.k * self.d) as u64 * u64::from(self.bits)
    }
}

fn quantize_with(c: &Codebook, scale: f32, bits: u32) -> QuantizedCodebook {
    let s = f64::from(scale);
    QuantizedCodebook {
        k: c.k(),
        d: c.d(),
        values: c.data().iter().map(|&v| quantize_value(v, s, bits)).collect(),
        scale,
        bits,
    }
}

fn mse(c: &Codebook, q: &QuantizedCodebook) -> f64 {
    let s = f64::from(q.scale);
    c.data()
        .iter()
        .zip(&q.values)
        .map(|(v, &i)| (v - f64::from(i) * s).powi(2))
        .sum::<f64>()
}

pub fn quantize_codebook(c: &Codebook, bits: u32, mode: ScaleMode) -> Result<QuantizedCodebook> {
    check_bits(bits)?;
    let absmax = c.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if absmax == 0.0 {
        return Ok(quantize_with(c, 1.0, bits));
    }
    let base = absmax / f64::from(qrange(bits).1);
    let to_scale = |s: f64| -> f32 {
        // f32 can underflow for tiny codebooks; fall back to the smallest
        // normal so the scale stays positive
        (s as f32).max(f32::MIN_POSITIVE)
    };
    match mode {
        ScaleMode::AbsMax => Ok(quantize_with(c, to_scale(base), bits)),
        ScaleMode::GridSearch => {
            let mut best = quantize_with(c, to_scale(base), bits);
            let mut best_err = mse(c, &best);
            for i in (1..GRID_CANDIDATES).rev() {
                let cand = quantize_with(
                    c,
                    to_scale(base * f64::from(i) / f64::from(GRID_CANDIDATES)),
                    bits,
                );
                let err = mse(c, &cand);
                if err < best_err {
                    best = cand;
                    best_err = err;
                }
            }
            Ok(best)
        }
    }
}

pub fn dequantize_codebook(q: &QuantizedCodebook) -> Codebook {
    let s = f64::from(q.scale);
    let data = q.values.iter().map(|&i| f64::from(i) * s).collect();
    Codebook::new(q.k, q.d, data).expect("quantized codebook dimensions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_and_clamping() {
        assert_eq!(quantize_value(1.234, 0.1, 8), 12);
        assert_eq!(quantize_value(100.0, 0.1, 8), 127);
        assert_eq!(quantize_value(-100.0, 0.1, 8), -128);
        // halves go to even
        assert_eq!(quantize_value(0.25, 0.5, 8), 0);
        assert_eq!(quantize_value(0.75, 0.5, 8), 2);
        assert_eq!(quantize_value(2.5, 1.0, 8), 2);
        assert_eq!(quantize_value(3.5, 1.0, 8), 4);
        assert_eq!(quantize_value(-2.5, 1.0, 8), -2);
    }

    #[test]
    fn dequantize_examples() {
        let q = QuantizedCodebook::new(1, 3, vec![0, 12, 127], 0.1, 8).unwrap();
        let c = dequantize_codebook(&q);
        assert_eq!(c.codeword(0)[0], 0.0);
        assert!((c.codeword(0)[1] - 1.2).abs() < 1e-6);
        assert!((c.codeword(0)[2] - 12.7).abs() < 1e-5);
        assert_eq!(q.payload_bits(), 24);
    }

    #[test]
    fn all_zero_codebook_gets_unit_scale() {
        let c = Codebook::new(2, 2, vec![0.0; 4]).unwrap();
        let q = quantize_codebook(&c, 8, ScaleMode::AbsMax).unwrap();
        assert_eq!(q.scale(), 1.0);
        assert_eq!(dequantize_codebook(&q), c);
    }

    #[test]
    fn rejects_bad_bits() {
        let c = Codebook::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(quantize_codebook(&c, 1, ScaleMode::AbsMax), Err(Error::InvalidBits(1)));
        assert_eq!(quantize_codebook(&c, 17, ScaleMode::AbsMax), Err(Error::InvalidBits(17)));
        assert!(QuantizedCodebook::new(1, 1, vec![128], 1.0, 8).is_err());
    }

    #[test]
    fn grid_search_never_worse_than_absmax() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        // heavy-tailed codebook: one outlier stretches the absmax scale
        let mut data: Vec<f64> = (0..256).map(|_| rng.random_range(-0.1..0.1)).collect();
        data[0] = 5.0;
        let c = Codebook::new(16, 16, data).unwrap();
        let a = quantize_codebook(&c, 4, ScaleMode::AbsMax).unwrap();
        let g = quantize_codebook(&c, 4, ScaleMode::GridSearch).unwrap();
        assert!(mse(&c, &g) <= mse(&c, &a));
    }

    #[test]
    fn absmax_error_bound_against_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..512 * 16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c = Codebook::new(512, 16, data.clone()).unwrap();
        let q = quantize_codebook(&c, 8, ScaleMode::AbsMax).unwrap();
        let s = f64::from(q.scale());
        let back = dequantize_codebook(&q);
        for (i, &v) in data.iter().enumerate() {
            // scalar oracle: nearest grid point, clamped
            let n = (v / s).round_ties_even().clamp(-128.0, 127.0);
            assert_eq!(f64::from(q.values()[i]), n);
            if v.abs() <= s * 127.0 {
                assert!((v - back.data()[i]).abs() <= s / 2.0 + 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(v in -1000.0f64..1000.0, s in 0.001f64..10.0, bits in 2u32..=16) {
            let q = quantize_value(v, s, bits);
            let nq = quantize_value(-v, s, bits);
            let half = 1i32 << (bits - 1);
            prop_assert!((-half..half).contains(&q));
            if q.abs() < half && nq.abs() < half {
                prop_assert_eq!(nq, -q);
            }
            if v.abs() <= s * f64::from(half - 1) {
                prop_assert!((v - f64::from(q) * s).abs() <= s / 2.0 * (1.0 + 1e-12));
            }
        }
    }
}
