//! Signed fixed-point arithmetic for the three operand formats used by the
//! neuron instructions: Q4.11 and Q7.8 (16-bit) and Q15.16 (32-bit).
//!
//! `Qm.n` means one sign bit, `m` integer bits and `n` fraction bits. Every
//! width reduction rounds to nearest, ties to even, and every overflow
//! saturates at the format bounds.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedError {
    #[error("unsupported fixed-point format Q{int_bits}.{frac_bits}")]
    UnsupportedFormat { int_bits: u8, frac_bits: u8 },
    #[error("{value} is not representable in {fmt}")]
    OutOfRange { value: f64, fmt: QFormat },
    #[error("format mismatch: {lhs} vs {rhs}")]
    FormatMismatch { lhs: QFormat, rhs: QFormat },
    #[error("shift amount {0} outside 1..=9")]
    ShiftOutOfRange(u32),
    #[error("raw value {raw} does not fit in {fmt}")]
    RawOutOfRange { raw: i64, fmt: QFormat },
}

/// A supported Q-format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    int_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    pub const Q4_11: QFormat = QFormat { int_bits: 4, frac_bits: 11 };
    pub const Q7_8: QFormat = QFormat { int_bits: 7, frac_bits: 8 };
    pub const Q15_16: QFormat = QFormat { int_bits: 15, frac_bits: 16 };

    pub const ALL: [QFormat; 3] = [Self::Q4_11, Self::Q7_8, Self::Q15_16];

    /// Only Q4.11, Q7.8 and Q15.16 are accepted.
    pub fn new(int_bits: u8, frac_bits: u8) -> Result<Self, FixedError> {
        Self::ALL
            .into_iter()
            .find(|f| f.int_bits == int_bits && f.frac_bits == frac_bits)
            .ok_or(FixedError::UnsupportedFormat { int_bits, frac_bits })
    }

    pub const fn int_bits(self) -> u8 {
        self.int_bits
    }

    pub const fn frac_bits(self) -> u8 {
        self.frac_bits
    }

    pub const fn total_bits(self) -> u8 {
        1 + self.int_bits + self.frac_bits
    }

    pub const fn min_raw(self) -> i32 {
        (-(1i64 << (self.total_bits() - 1))) as i32
    }

    pub const fn max_raw(self) -> i32 {
        ((1i64 << (self.total_bits() - 1)) - 1) as i32
    }

    /// One unit in the last place, as a real number.
    pub fn lsb(self) -> f64 {
        1.0 / (1u64 << self.frac_bits) as f64
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    /// Clamp a wide raw value into this format's range.
    pub fn saturate(self, wide: i128) -> i32 {
        wide.clamp(self.min_raw() as i128, self.max_raw() as i128) as i32
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw() as i64..=self.max_raw() as i64).contains(&raw)
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

/// Divide `value` by `2^shift` rounding to nearest, ties to even.
/// A negative `shift` multiplies instead.
pub fn round_shift(value: i128, shift: i32) -> i128 {
    if shift <= 0 {
        return value << (-shift);
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i128 << (shift - 1);
    match rem.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => floor + (floor & 1),
    }
}

/// A fixed-point number: `raw / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fixed {
    raw: i32,
    fmt: QFormat,
}

impl Fixed {
    pub fn from_raw(raw: i64, fmt: QFormat) -> Result<Self, FixedError> {
        if !fmt.contains_raw(raw) {
            return Err(FixedError::RawOutOfRange { raw, fmt });
        }
        Ok(Fixed { raw: raw as i32, fmt })
    }

    /// Saturating constructor from an already-scaled raw value.
    pub fn saturating_from_raw(raw: i128, fmt: QFormat) -> Self {
        Fixed { raw: fmt.saturate(raw), fmt }
    }

    /// Reinterpret the low `total_bits` of `bits` as a two's-complement raw.
    pub fn from_bits(bits: u32, fmt: QFormat) -> Self {
        let shift = 32 - fmt.total_bits() as u32;
        Fixed { raw: ((bits << shift) as i32) >> shift, fmt }
    }

    pub fn zero(fmt: QFormat) -> Self {
        Fixed { raw: 0, fmt }
    }

    pub fn from_real(x: f64, fmt: QFormat) -> Result<Self, FixedError> {
        let scaled = (x * (1u64 << fmt.frac_bits) as f64).round_ties_even();
        if !scaled.is_finite() || !fmt.contains_raw_f64(scaled) {
            return Err(FixedError::OutOfRange { value: x, fmt });
        }
        Ok(Fixed { raw: scaled as i32, fmt })
    }

    pub fn saturating_from_real(x: f64, fmt: QFormat) -> Self {
        if x.is_nan() {
            return Self::zero(fmt);
        }
        let scaled = (x * (1u64 << fmt.frac_bits) as f64).round_ties_even();
        let clamped = scaled.clamp(fmt.min_raw() as f64, fmt.max_raw() as f64);
        Fixed { raw: clamped as i32, fmt }
    }

    pub const fn raw(self) -> i32 {
        self.raw
    }

    pub const fn fmt(self) -> QFormat {
        self.fmt
    }

    /// Two's-complement bit pattern, zero-extended from `total_bits`.
    pub fn to_bits(self) -> u32 {
        let bits = self.fmt.total_bits() as u32;
        if bits == 32 {
            self.raw as u32
        } else {
            (self.raw as u32) & ((1u32 << bits) - 1)
        }
    }

    pub fn to_real(self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    /// Exact product of the raws, rescaled into `out`.
    pub fn mul(self, rhs: Fixed, out: QFormat) -> Fixed {
        let product = self.raw as i128 * rhs.raw as i128;
        let shift = (self.fmt.frac_bits + rhs.fmt.frac_bits) as i32 - out.frac_bits as i32;
        Fixed::saturating_from_raw(round_shift(product, shift), out)
    }

    pub fn add(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        self.check_same(rhs)?;
        Ok(Fixed::saturating_from_raw(self.raw as i128 + rhs.raw as i128, self.fmt))
    }

    pub fn sub(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        self.check_same(rhs)?;
        Ok(Fixed::saturating_from_raw(self.raw as i128 - rhs.raw as i128, self.fmt))
    }

    pub fn convert(self, out: QFormat) -> Fixed {
        let shift = self.fmt.frac_bits as i32 - out.frac_bits as i32;
        Fixed::saturating_from_raw(round_shift(self.raw as i128, shift), out)
    }

    /// Arithmetic right shift by `k` in `1..=9`; floors toward negative infinity.
    pub fn shr(self, k: u32) -> Result<Fixed, FixedError> {
        if !(1..=9).contains(&k) {
            return Err(FixedError::ShiftOutOfRange(k));
        }
        Ok(Fixed { raw: self.raw >> k, fmt: self.fmt })
    }

    fn check_same(self, rhs: Fixed) -> Result<(), FixedError> {
        if self.fmt != rhs.fmt {
            return Err(FixedError::FormatMismatch { lhs: self.fmt, rhs: rhs.fmt });
        }
        Ok(())
    }
}

impl QFormat {
    fn contains_raw_f64(self, raw: f64) -> bool {
        raw >= self.min_raw() as f64 && raw <= self.max_raw() as f64
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "raw={} fmt={} val={}", self.raw, self.fmt, self.to_real())
    }
}
