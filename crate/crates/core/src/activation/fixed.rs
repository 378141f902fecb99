//! Two's-complement fixed-point formats and the bit-exact PWL datapath.

use super::PwlSpec;
use crate::error::{Error, Result};

/// Signed two's-complement fixed-point format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FixedFormat {
    /// `total_bits` in 4..=32, `frac_bits` in 0..total_bits.
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(4..=32).contains(&total_bits) {
            return Err(Error::Argument(format!("total_bits must be 4..=32, got {total_bits}")));
        }
        if frac_bits >= total_bits {
            return Err(Error::Argument(format!(
                "frac_bits must be < total_bits, got {frac_bits}/{total_bits}"
            )));
        }
        Ok(FixedFormat { total_bits, frac_bits })
    }

    pub fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Smallest representable step, 2^-frac_bits.
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }
}

/// A raw integer paired with its format; real value = raw * 2^-frac_bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedValue {
    raw: i64,
    format: FixedFormat,
}

impl FixedValue {
    /// Wraps a raw integer, checking it fits the format.
    pub fn from_raw(raw: i64, format: FixedFormat) -> Result<Self> {
        if raw < format.min_raw() || raw > format.max_raw() {
            return Err(Error::Argument(format!(
                "raw {raw} out of range for {}-bit format",
                format.total_bits()
            )));
        }
        Ok(FixedValue { raw, format })
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> FixedFormat {
        self.format
    }

    pub fn value(self) -> f64 {
        self.raw as f64 * self.format.resolution()
    }
}

/// Rounds `x` half-to-even to the nearest representable value, then
/// saturates to the format range (never wraps).
pub fn quantize(x: f64, format: FixedFormat) -> Result<FixedValue> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("quantize: non-finite input {x}")));
    }
    let scaled = x * (format.frac_bits as f64).exp2();
    let rounded = scaled.round_ties_even();
    let raw = if rounded <= format.min_raw() as f64 {
        format.min_raw()
    } else if rounded >= format.max_raw() as f64 {
        format.max_raw()
    } else {
        rounded as i64
    };
    Ok(FixedValue { raw, format })
}

/// Arithmetic shift right by `shift` with round-half-to-even. For v >= 0 and
/// v < 0 alike the remainder below the shifted-out bits is in [0, 2^shift).
fn shift_round_half_even(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && (floor & 1) == 1) {
        floor + 1
    } else {
        floor
    }
}

fn saturate(v: i128, format: FixedFormat) -> i64 {
    let lo = format.min_raw() as i128;
    let hi = format.max_raw() as i128;
    v.clamp(lo, hi) as i64
}

/// Bit-exact fixed-point PWL evaluation, modeling the hardware datapath:
///
/// 1. segment select by integer comparison of `x.raw` against breakpoints
///    quantized to `x`'s format (right-segment convention);
/// 2. slope (quantized to `coeff_format`) times `x.raw` in a double-width
///    integer;
/// 3. shift down to `out_format`'s scale with round-half-to-even;
/// 4. add the intercept quantized directly to `out_format`;
/// 5. saturate to `out_format`.
pub fn eval_pwl_fixed(
    spec: &PwlSpec,
    x: FixedValue,
    coeff_format: FixedFormat,
    out_format: FixedFormat,
) -> FixedValue {
    let xf = x.format();
    let seg = {
        let mut idx = 0usize;
        for &b in spec.breakpoints() {
            // Spec coefficients are finite by construction, so quantize
            // cannot fail here.
            let braw = quantize(b, xf).expect("finite breakpoint").raw();
            if braw <= x.raw() {
                idx += 1;
            } else {
                break;
            }
        }
        idx
    };
    let slope = quantize(spec.slopes()[seg], coeff_format).expect("finite slope").raw();
    let intercept = quantize(spec.intercepts()[seg], out_format).expect("finite intercept").raw();

    let product = x.raw() as i128 * slope as i128;
    let pre_shift = xf.frac_bits() + coeff_format.frac_bits();
    let scaled = if pre_shift >= out_format.frac_bits() {
        shift_round_half_even(product, pre_shift - out_format.frac_bits())
    } else {
        product << (out_format.frac_bits() - pre_shift)
    };
    let sum = scaled + intercept as i128;
    FixedValue { raw: saturate(sum, out_format), format: out_format }
}
