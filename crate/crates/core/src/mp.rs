//! Fixed-point big-integer arithmetic at 2^-256 resolution, the escalation
//! path when double-double cannot certify a floor. Values are `mant * 2^-SCALE`
//! with an exact `BigInt` mantissa; every routine documents its error in ulps
//! (one ulp = 2^-SCALE).

use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fractional bits carried by the fixed-point representation.
pub const SCALE: u64 = 256;

/// Round `num/den * 2^SCALE` to nearest (error <= 1/2 ulp).
pub fn from_ratio(num: &BigInt, den: &BigInt) -> BigInt {
    let shifted = num << SCALE;
    let (mut q, r) = shifted.div_rem(den);
    // round half away from zero
    if (&r * 2i32).abs() >= den.abs() {
        if (num.sign() == den.sign()) || r.is_zero() {
            q += 1;
        } else {
            q -= 1;
        }
    }
    q
}

pub fn from_rational(r: &BigRational) -> BigInt {
    from_ratio(r.numer(), r.denom())
}

/// floor(sqrt(d) * 2^SCALE); error in [0, 1) ulp.
pub fn sqrt_u64(d: u64) -> BigInt {
    let v = BigUint::from(d) << (2 * SCALE);
    BigInt::from(v.sqrt())
}

/// floor(n^(p/q) * 2^SCALE) for n >= 1, q >= 1; error in [0, 1) ulp.
pub fn pow_frac_u64(n: u64, p: u64, q: u64) -> BigInt {
    debug_assert!(n >= 1 && q >= 1);
    let v = BigUint::from(n).pow(p as u32) << (SCALE * q);
    BigInt::from(v.nth_root(q as u32))
}

/// ln(n) * 2^SCALE for n >= 1, accurate to a few ulps.
///
/// Reduces to ln 2 and the atanh series on m in [1, 2):
/// ln m = 2 atanh((m-1)/(m+1)).
pub fn ln_u64(n: u64) -> BigInt {
    debug_assert!(n >= 1);
    if n == 1 {
        return BigInt::zero();
    }
    let e = 63 - n.leading_zeros() as u64; // 2^e <= n < 2^{e+1}
    // m = n / 2^e in [1, 2) as fixed point
    let m = BigInt::from(n) << (SCALE - e);
    BigInt::from(e) * ln2() + ln_fixed_near_one(&m)
}

/// ln(m) for fixed-point m in [0.5, 2.5); a few ulps of error.
fn ln_fixed_near_one(m: &BigInt) -> BigInt {
    let one = BigInt::one() << SCALE;
    // t = (m-1)/(m+1), |t| < 0.43
    let t = from_ratio(&(m - &one), &(m + &one));
    let t2num = &t * &t;
    let t2 = &t2num >> SCALE; // t^2, truncated
    let mut term = t.clone();
    let mut acc = t;
    let mut k: u64 = 3;
    loop {
        term = (&term * &t2) >> SCALE;
        if term.is_zero() {
            break;
        }
        acc += &term / BigInt::from(k);
        k += 2;
        if k > 2048 {
            break;
        }
    }
    acc << 1
}

/// ln 2 * 2^SCALE via 2 atanh(1/3); error below 2 ulps.
pub fn ln2() -> BigInt {
    // 2 * sum_{j>=0} (1/3)^{2j+1} / (2j+1)
    let mut acc = BigInt::zero();
    let mut pw = BigInt::one() << SCALE; // 3^{-2j-1} * 3 initially
    let nine = BigInt::from(9u32);
    let mut j: u64 = 0;
    loop {
        pw /= if j == 0 { BigInt::from(3u32) } else { nine.clone() };
        if pw.is_zero() {
            break;
        }
        acc += &pw / BigInt::from(2 * j + 1);
        j += 1;
    }
    acc << 1
}

/// A fixed-point value with a certified error radius in ulps.
#[derive(Clone, Debug)]
pub struct MpVal {
    pub mant: BigInt,
    pub err_ulps: u64,
}

impl MpVal {
    pub fn exact(mant: BigInt) -> MpVal {
        MpVal { mant, err_ulps: 0 }
    }

    pub fn add(&self, other: &MpVal) -> MpVal {
        MpVal {
            mant: &self.mant + &other.mant,
            err_ulps: self.err_ulps + other.err_ulps,
        }
    }

    /// Multiply by an exact integer.
    pub fn mul_int(&self, k: &BigInt) -> MpVal {
        let kb = k.abs().to_u64().unwrap_or(u64::MAX);
        MpVal {
            mant: &self.mant * k,
            err_ulps: self.err_ulps.saturating_mul(kb),
        }
    }

    /// Product of two values of magnitude below 2^mag_bits (after scaling).
    pub fn mul(&self, other: &MpVal, mag_bits: u64) -> MpVal {
        let mant = (&self.mant * &other.mant) >> SCALE;
        let carry = 1u64 << mag_bits.min(40);
        MpVal {
            mant,
            err_ulps: self
                .err_ulps
                .saturating_mul(carry)
                .saturating_add(other.err_ulps.saturating_mul(carry))
                .saturating_add(1),
        }
    }

    /// Floor, provided the certified interval avoids an integer; `None` when ambiguous.
    pub fn floor_checked(&self) -> Option<BigInt> {
        let err = BigInt::from(self.err_ulps);
        let lo = &self.mant - &err;
        let hi = &self.mant + &err;
        let fl = lo.div_floor(&(BigInt::one() << SCALE));
        let fh = hi.div_floor(&(BigInt::one() << SCALE));
        if fl == fh {
            Some(fl)
        } else {
            None
        }
    }

    /// Fractional part as a ratio in [0,1) ignoring the error radius.
    pub fn fract_f64(&self) -> f64 {
        let one = BigInt::one() << SCALE;
        let r = self.mant.mod_floor(&one);
        ratio_to_f64(&r, &one)
    }
}

pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    // num/den assumed in (-2^60, 2^60) after division
    let q: BigInt = (num << 62) / den;
    q.to_f64().unwrap_or(0.0) / (1u64 << 62) as f64
}

/// Fractional part of `m * x` where `x = mant * 2^-SCALE`; returns a fixed-point
/// value in [0, 1) with the inherited error of |m| ulps.
pub fn frac_mul_int(m: &BigInt, x: &MpVal) -> MpVal {
    let one = BigInt::one() << SCALE;
    let prod = m * &x.mant;
    let mant = prod.mod_floor(&one);
    let mbits = m.abs().to_u64().unwrap_or(u64::MAX);
    MpVal {
        mant,
        err_ulps: x.err_ulps.saturating_mul(mbits.max(1)),
    }
}

/// Collect the fixed-point digits of `x` as f64 in [0,1); helper for phases.
pub fn frac_to_unit_f64(mant: &BigInt) -> f64 {
    let one = BigInt::one() << SCALE;
    ratio_to_f64(&mant.mod_floor(&one), &one)
}

/// Decompose `d` as `s^2 * f` with `f` squarefree (trial division).
pub fn squarefree_decompose(d: u64) -> (u64, u64) {
    let mut f = d;
    let mut s = 1u64;
    let mut p = 2u64;
    while p * p <= f {
        let p2 = p * p;
        while f % p2 == 0 {
            f /= p2;
            s *= p;
        }
        p += 1;
    }
    (s, f)
}

/// Evaluate an integer polynomial at `n` (Horner, exact).
pub fn poly_eval_big(coeffs: &[BigInt], n: &BigInt) -> BigInt {
    let mut acc = BigInt::zero();
    for c in coeffs.iter().rev() {
        acc = acc * n + c;
    }
    acc
}

/// Small helper kept exact: coefficients as i64.
pub fn poly_eval_i64(coeffs: &[i64], n: i64) -> BigInt {
    let cs: Vec<BigInt> = coeffs.iter().map(|&c| BigInt::from(c)).collect();
    poly_eval_big(&cs, &BigInt::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_f64(m: &BigInt) -> f64 {
        ratio_to_f64(m, &(BigInt::one() << SCALE))
    }

    #[test]
    fn ln2_matches_f64() {
        let v = to_f64(&ln2());
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ln_u64_values() {
        assert!((to_f64(&ln_u64(100)) - 100f64.ln()).abs() < 1e-14);
        assert!((to_f64(&ln_u64(1_000_000)) - 1_000_000f64.ln()).abs() < 1e-14);
        assert_eq!(ln_u64(1), BigInt::zero());
    }

    #[test]
    fn pow_frac_is_exact_for_perfect_powers() {
        // 4^{3/2} * 2^SCALE exactly
        let v = pow_frac_u64(4, 3, 2);
        assert_eq!(v, BigInt::from(8) << SCALE);
    }

    #[test]
    fn pow_frac_oracle() {
        // 5^{3/2} against a 220-bit oracle value
        let v = to_f64(&pow_frac_u64(5, 3, 2));
        assert!((v - 11.180339887498949).abs() < 1e-15);
    }

    #[test]
    fn sqrt_consistency() {
        let s = sqrt_u64(2);
        let sq = (&s * &s) >> SCALE;
        let two = BigInt::from(2) << SCALE;
        let diff = (&two - &sq).abs();
        assert!(diff < BigInt::from(4), "residual {diff}");
    }

    #[test]
    fn floor_checked_detects_ambiguity() {
        let exact_int = MpVal {
            mant: BigInt::from(7) << SCALE,
            err_ulps: 3,
        };
        assert!(exact_int.floor_checked().is_none());
        let clear = MpVal {
            mant: (BigInt::from(7) << SCALE) + BigInt::from(12345u64),
            err_ulps: 3,
        };
        assert_eq!(clear.floor_checked(), Some(BigInt::from(7)));
    }

    #[test]
    fn squarefree() {
        assert_eq!(squarefree_decompose(8), (2, 2));
        assert_eq!(squarefree_decompose(12), (2, 3));
        assert_eq!(squarefree_decompose(7), (1, 7));
        assert_eq!(squarefree_decompose(36), (6, 1));
    }
}
