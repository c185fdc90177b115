//! Fixed-point numerics: per-tensor quantization parameters, quantized
//! tensors, and the integer-only requantizer used between layers.
//!
//! Rounding is round-half-away-from-zero everywhere. Weights are symmetric
//! (zero point 0); activations are asymmetric with a zero point in
//! `[-128, 127]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Signed envelope of the partial-sum register file.
pub const PSUM_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParams {
    pub scale: f32,
    pub zero_point: i32,
    pub bits: u8,
}

impl QParams {
    pub fn new(scale: f32, zero_point: i32, bits: u8) -> Result<Self> {
        let q = Self {
            scale,
            zero_point,
            bits,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::QParams(format!("scale must be > 0, got {}", self.scale)));
        }
        if !matches!(self.bits, 8 | 24 | 32) {
            return Err(Error::QParams(format!("bits must be 8, 24 or 32, got {}", self.bits)));
        }
        if !(-128..=127).contains(&self.zero_point) {
            return Err(Error::QParams(format!(
                "zero point {} outside [-128, 127]",
                self.zero_point
            )));
        }
        Ok(())
    }

    /// Symmetric 8-bit parameters covering `[-max_abs, max_abs]`.
    pub fn symmetric(max_abs: f64) -> Self {
        let max_abs = if max_abs > 0.0 && max_abs.is_finite() { max_abs } else { 1.0 };
        Self {
            scale: (max_abs / 127.0) as f32,
            zero_point: 0,
            bits: 8,
        }
    }

    /// Asymmetric 8-bit parameters covering `[min, max]` (always widened to
    /// include zero so that real zero is exactly representable).
    pub fn asymmetric(min: f64, max: f64) -> Self {
        let lo = min.min(0.0);
        let hi = max.max(0.0);
        let span = hi - lo;
        if !(span > 0.0 && span.is_finite()) {
            return Self {
                scale: 1.0 / 127.0,
                zero_point: 0,
                bits: 8,
            };
        }
        let scale = (span / 255.0) as f32;
        let zp = (-128.0 - lo / scale as f64).round().clamp(-128.0, 127.0) as i32;
        Self {
            scale,
            zero_point: zp,
            bits: 8,
        }
    }

    pub fn min_value(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_value(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }
}

/// Quantized (H, W, Ch) tensor; `data` is row-major H -> W -> Ch.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<i32>,
    pub qparams: QParams,
}

impl QTensor {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<i32>, qparams: QParams) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "qtensor {h}x{w}x{c} needs {} elements, got {}",
                h * w * c,
                data.len()
            )));
        }
        let (lo, hi) = (qparams.min_value(), qparams.max_value());
        if let Some(i) = data.iter().position(|&v| (v as i64) < lo || (v as i64) > hi) {
            return Err(Error::QParams(format!(
                "element {i} = {} not representable in {} bits",
                data[i], qparams.bits
            )));
        }
        Ok(Self {
            h,
            w,
            c,
            data,
            qparams,
        })
    }

    pub fn from_tensor(t: &Tensor, q: QParams) -> Result<Self> {
        let data = quantize(&t.data, q)?;
        Ok(Self {
            h: t.h,
            w: t.w,
            c: t.c,
            data,
            qparams: q,
        })
    }

    pub fn dequantize(&self) -> Tensor {
        Tensor {
            h: self.h,
            w: self.w,
            c: self.c,
            data: dequantize(&self.data, self.qparams),
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> i32 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }
}

pub fn quantize_value(x: f64, q: QParams) -> i32 {
    let v = (x / q.scale as f64).round() + q.zero_point as f64;
    v.clamp(q.min_value() as f64, q.max_value() as f64) as i32
}

pub fn quantize(x: &[f64], q: QParams) -> Result<Vec<i32>> {
    q.validate()?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            value: x[i],
        });
    }
    Ok(x.iter().map(|&v| quantize_value(v, q)).collect())
}

pub fn dequantize(v: &[i32], q: QParams) -> Vec<f64> {
    let s = q.scale as f64;
    v.iter().map(|&x| (x - q.zero_point) as f64 * s).collect()
}

/// Fixed-point multiplier with `real ≈ multiplier · 2^-(31 + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requantizer {
    pub multiplier: i32,
    pub shift: u8,
}

impl Requantizer {
    /// Normalizes a real ratio in `(0, 1)` so that
    /// `2^30 <= multiplier < 2^31`.
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0 && ratio < 1.0) {
            return Err(Error::QParams(format!(
                "requantization ratio must lie in (0, 1), got {ratio}"
            )));
        }
        // ratio = f * 2^-shift with f in [0.5, 1)
        let mut shift = 0u32;
        let mut f = ratio;
        while f < 0.5 {
            f *= 2.0;
            shift += 1;
        }
        if shift > 90 {
            return Err(Error::QParams(format!("ratio {ratio} too small to represent")));
        }
        let m = (f * (1u64 << 31) as f64).round() as i64;
        let multiplier = m.min(i32::MAX as i64) as i32;
        Ok(Self {
            multiplier,
            shift: shift as u8,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.multiplier as f64 * 2f64.powi(-(31 + self.shift as i32))
    }

    pub fn is_normalized(&self) -> bool {
        (1i32 << 30) <= self.multiplier
    }
}

/// Arithmetic right shift of `v` by `n` bits, rounding half away from zero.
#[inline]
pub fn round_shift(v: i128, n: u32) -> i128 {
    if n == 0 {
        return v;
    }
    let half = 1i128 << (n - 1);
    if v >= 0 {
        (v + half) >> n
    } else {
        -((-v + half) >> n)
    }
}

/// Integer-only requantization of a 32-bit accumulator to signed 8 bits.
#[inline]
pub fn requantize(acc: i32, r: Requantizer, out_zp: i32) -> i32 {
    let prod = acc as i128 * r.multiplier as i128;
    let scaled = round_shift(prod, 31 + r.shift as u32);
    (scaled + out_zp as i128).clamp(-128, 127) as i32
}

/// True when `acc` fits the signed partial-sum register envelope.
#[inline]
pub fn fits_psum(acc: i64) -> bool {
    let lim = 1i64 << (PSUM_BITS - 1);
    (-lim..lim).contains(&acc)
}

/// Bias quantized to 32 bits at scale `s_in * s_w`.
pub fn quantize_bias(b: &[f64], s_in: f32, s_w: f32) -> Vec<i32> {
    let s = s_in as f64 * s_w as f64;
    b.iter()
        .map(|&v| (v / s).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(scale: f32, zp: i32) -> QParams {
        QParams::new(scale, zp, 8).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&[0.0], q(0.5, 0)).unwrap(), vec![0]);
        assert_eq!(quantize(&[3.2], q(0.5, 0)).unwrap(), vec![6]);
        assert_eq!(quantize(&[100.0], q(0.5, 0)).unwrap(), vec![127]);
        assert_eq!(quantize(&[-100.0], q(0.5, 0)).unwrap(), vec![-128]);
        // half away from zero
        assert_eq!(quantize(&[0.25, -0.25], q(0.5, 0)).unwrap(), vec![1, -1]);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let err = quantize(&[1.0, f64::NAN], q(0.5, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(quantize(&[f64::INFINITY], q(0.5, 0)).is_err());
    }

    #[test]
    fn invalid_qparams_rejected() {
        assert!(QParams::new(0.0, 0, 8).is_err());
        assert!(QParams::new(-1.0, 0, 8).is_err());
        assert!(QParams::new(1.0, 0, 16).is_err());
        assert!(QParams::new(1.0, 200, 8).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(&[6], q(0.5, 0)), vec![3.0]);
        assert_eq!(dequantize(&[-7], q(0.25, -7)), vec![0.0]);
    }

    #[test]
    fn requantize_examples() {
        let r = Requantizer::from_ratio(0.125).unwrap();
        assert_eq!(r.multiplier, 1 << 30);
        assert_eq!(r.shift, 2);
        assert_eq!(requantize(0, r, 0), 0);
        assert_eq!(requantize(1000, r, 0), 125);
        assert_eq!(requantize(-1000, r, 0), -125);
        assert_eq!(requantize(1 << 20, r, 0), 127);
        assert_eq!(requantize(-(1 << 20), r, 0), -128);
        // 4 * 0.125 = 0.5 rounds away from zero
        assert_eq!(requantize(4, r, 0), 1);
        assert_eq!(requantize(-4, r, 0), -1);
    }

    #[test]
    fn requantizer_rejects_out_of_range_ratios() {
        for bad in [0.0, -0.1, 1.0, 2.5, f64::NAN] {
            assert!(Requantizer::from_ratio(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wide_bit_widths_saturate_at_their_own_range() {
        let q24 = QParams::new(1.0, 0, 24).unwrap();
        assert_eq!(quantize(&[1e9], q24).unwrap(), vec![(1 << 23) - 1]);
        let q32 = QParams::new(1.0, 0, 32).unwrap();
        assert_eq!(quantize(&[-1e12], q32).unwrap(), vec![i32::MIN]);
    }

    #[test]
    fn psum_envelope() {
        assert!(fits_psum((1 << 23) - 1));
        assert!(fits_psum(-(1 << 23)));
        assert!(!fits_psum(1 << 23));
    }

    proptest! {
        #[test]
        fn round_trip_within_half_lsb(x in -60.0f64..60.0, scale in 0.5f32..1.0, zp in -10i32..10) {
            let p = q(scale, zp);
            let back = dequantize(&quantize(&[x], p).unwrap(), p)[0];
            prop_assert!((back - x).abs() <= scale as f64 / 2.0 + 1e-9);
        }

        #[test]
        fn requantizer_normalized_and_accurate(ratio in 1e-6f64..0.999) {
            let r = Requantizer::from_ratio(ratio).unwrap();
            prop_assert!(r.is_normalized());
            prop_assert!(((r.ratio() - ratio) / ratio).abs() < 2f64.powi(-24));
        }

        #[test]
        fn requantize_tracks_real_arithmetic(acc in -(1i32 << 23)..(1i32 << 23), ratio in 1e-4f64..0.999, zp in -20i32..20) {
            let r = Requantizer::from_ratio(ratio).unwrap();
            let real = acc as f64 * ratio;
            let expect = (real.round() as i64 + zp as i64).clamp(-128, 127);
            let got = requantize(acc, r, zp) as i64;
            prop_assert!((got - expect).abs() <= 1);
            // exact unless the real product sits within the multiplier
            // error bound of a rounding boundary
            let frac = real.abs().fract();
            if acc.abs() < (1 << 16) && (frac - 0.5).abs() > 2f64.powi(-14) {
                prop_assert_eq!(got, expect);
            }
            prop_assert!((-128..=127).contains(&got));
        }
    }
}
