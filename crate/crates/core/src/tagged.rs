//! Exact scalars with rationality tracked in the representation.
//!
//! A `TaggedReal` is a rational, a quadratic irrational `a + b sqrt(d)` with
//! `d >= 2` squarefree, or a flagged float. Rationality is decided from the
//! variant (and the float's flag), never from numerical closeness; the §6-style
//! case splits depend on this.

use alloc::string::String;
use alloc::format;
use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::dd::Dd;
use crate::mp::squarefree_decompose;

#[derive(Clone, Debug, PartialEq)]
pub enum TaggedReal {
    Rational(BigRational),
    /// `a + b sqrt(d)`, `b != 0`, `d >= 2` squarefree.
    Quad {
        a: BigRational,
        b: BigRational,
        d: u64,
    },
    /// A float whose rationality is only known if `assume_irrational` is set.
    /// Carried at double-double precision so folded constants (like ln 2)
    /// keep ~31 digits.
    Float { value: Dd, assume_irrational: bool },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Rationality {
    Rational,
    Irrational,
    Unknown,
}

/// Raised when an operation needs a rationality verdict a flagged float cannot give.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Undecidable;

impl fmt::Display for Undecidable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rationality undecidable for an untagged float")
    }
}

impl TaggedReal {
    pub fn zero() -> TaggedReal {
        TaggedReal::Rational(BigRational::zero())
    }

    pub fn one() -> TaggedReal {
        TaggedReal::Rational(BigRational::one())
    }

    pub fn from_int(n: i64) -> TaggedReal {
        TaggedReal::Rational(BigRational::from(BigInt::from(n)))
    }

    pub fn ratio(num: i64, den: i64) -> TaggedReal {
        TaggedReal::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn rational(r: BigRational) -> TaggedReal {
        TaggedReal::Rational(r)
    }

    /// `sqrt(d)` for an integer `d >= 2`; collapses to a rational when `d` is a square.
    pub fn sqrt(d: u64) -> TaggedReal {
        TaggedReal::quad(BigRational::zero(), BigRational::one(), d)
    }

    /// Normalized constructor for `a + b sqrt(d)`.
    pub fn quad(a: BigRational, b: BigRational, d: u64) -> TaggedReal {
        if b.is_zero() || d == 0 {
            return TaggedReal::Rational(a);
        }
        let (s, f) = squarefree_decompose(d);
        if f <= 1 {
            // sqrt(d) = s is rational
            return TaggedReal::Rational(a + b * BigRational::from(BigInt::from(s)));
        }
        TaggedReal::Quad {
            a,
            b: b * BigRational::from(BigInt::from(s)),
            d: f,
        }
    }

    pub fn float(value: f64, assume_irrational: bool) -> TaggedReal {
        TaggedReal::Float {
            value: Dd::from_f64(value),
            assume_irrational,
        }
    }

    pub fn float_dd(value: Dd, assume_irrational: bool) -> TaggedReal {
        TaggedReal::Float {
            value,
            assume_irrational,
        }
    }

    pub fn rationality(&self) -> Rationality {
        match self {
            TaggedReal::Rational(_) => Rationality::Rational,
            TaggedReal::Quad { .. } => Rationality::Irrational,
            TaggedReal::Float {
                assume_irrational, ..
            } => {
                if *assume_irrational {
                    Rationality::Irrational
                } else {
                    Rationality::Unknown
                }
            }
        }
    }

    pub fn is_rational(&self) -> Result<bool, Undecidable> {
        match self.rationality() {
            Rationality::Rational => Ok(true),
            Rationality::Irrational => Ok(false),
            Rationality::Unknown => Err(Undecidable),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TaggedReal::Rational(r) => r.is_zero(),
            TaggedReal::Quad { .. } => false,
            TaggedReal::Float { value, .. } => *value == Dd::ZERO,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            TaggedReal::Rational(r) => Some(r),
            _ => None,
        }
    }

    /// Coordinates `(a, b, d)` with `self = a + b sqrt(d)`; rationals get `b = 0, d = 0`.
    pub fn quad_parts(&self) -> Option<(BigRational, BigRational, u64)> {
        match self {
            TaggedReal::Rational(r) => Some((r.clone(), BigRational::zero(), 0)),
            TaggedReal::Quad { a, b, d } => Some((a.clone(), b.clone(), *d)),
            TaggedReal::Float { .. } => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_dd().to_f64()
    }

    pub fn to_dd(&self) -> Dd {
        match self {
            TaggedReal::Rational(r) => rational_to_dd(r),
            TaggedReal::Quad { a, b, d } => {
                rational_to_dd(a) + rational_to_dd(b) * Dd::from_f64(*d as f64).sqrt()
            }
            TaggedReal::Float { value, .. } => *value,
        }
    }

    pub fn neg(&self) -> TaggedReal {
        match self {
            TaggedReal::Rational(r) => TaggedReal::Rational(-r),
            TaggedReal::Quad { a, b, d } => TaggedReal::Quad {
                a: -a,
                b: -b,
                d: *d,
            },
            TaggedReal::Float {
                value,
                assume_irrational,
            } => TaggedReal::Float {
                value: -*value,
                assume_irrational: *assume_irrational,
            },
        }
    }

    pub fn add(&self, other: &TaggedReal) -> TaggedReal {
        match (self, other) {
            (TaggedReal::Rational(x), TaggedReal::Rational(y)) => TaggedReal::Rational(x + y),
            (TaggedReal::Rational(x), TaggedReal::Quad { a, b, d }) => {
                TaggedReal::quad(x + a, b.clone(), *d)
            }
            (TaggedReal::Quad { a, b, d }, TaggedReal::Rational(y)) => {
                TaggedReal::quad(a + y, b.clone(), *d)
            }
            (TaggedReal::Quad { a, b, d }, TaggedReal::Quad { a: a2, b: b2, d: d2 })
                if d == d2 =>
            {
                TaggedReal::quad(a + a2, b + b2, *d)
            }
            _ => TaggedReal::float_dd(self.to_dd() + other.to_dd(), false),
        }
    }

    pub fn sub(&self, other: &TaggedReal) -> TaggedReal {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &TaggedReal) -> TaggedReal {
        match (self, other) {
            (TaggedReal::Rational(x), TaggedReal::Rational(y)) => TaggedReal::Rational(x * y),
            (TaggedReal::Rational(x), TaggedReal::Quad { a, b, d }) => {
                TaggedReal::quad(x * a, x * b, *d)
            }
            (TaggedReal::Quad { a, b, d }, TaggedReal::Rational(y)) => {
                TaggedReal::quad(a * y, b * y, *d)
            }
            (TaggedReal::Quad { a, b, d }, TaggedReal::Quad { a: a2, b: b2, d: d2 })
                if d == d2 =>
            {
                let dd = BigRational::from(BigInt::from(*d));
                TaggedReal::quad(a * a2 + b * b2 * dd, a * b2 + b * a2, *d)
            }
            _ => TaggedReal::float_dd(self.to_dd() * other.to_dd(), false),
        }
    }

    pub fn div(&self, other: &TaggedReal) -> TaggedReal {
        match other {
            TaggedReal::Rational(y) => {
                let inv = TaggedReal::Rational(BigRational::one() / y);
                self.mul(&inv)
            }
            TaggedReal::Quad { a, b, d } => {
                // 1/(a + b sqrt d) = (a - b sqrt d) / (a^2 - b^2 d)
                let dd = BigRational::from(BigInt::from(*d));
                let norm = a * a - b * b * dd;
                let inv = TaggedReal::quad(a / &norm, -(b / &norm), *d);
                self.mul(&inv)
            }
            TaggedReal::Float { value, .. } => {
                TaggedReal::float_dd(self.to_dd() / *value, false)
            }
        }
    }

    /// Exact comparison against a rational; `None` for floats.
    pub fn cmp_rational(&self, r: &BigRational) -> Option<Ordering> {
        match self {
            TaggedReal::Rational(x) => Some(x.cmp(r)),
            TaggedReal::Quad { a, b, d } => {
                // a + b sqrt(d) vs r  <=>  b sqrt(d) vs r - a
                let t = r - a;
                let dd = BigRational::from(BigInt::from(*d));
                let lhs_sq = b * b * dd;
                Some(if b.is_positive() {
                    if !t.is_positive() {
                        Ordering::Greater
                    } else {
                        lhs_sq.cmp(&(&t * &t))
                    }
                } else {
                    if !t.is_negative() {
                        Ordering::Less
                    } else {
                        (&t * &t).cmp(&lhs_sq)
                    }
                })
            }
            TaggedReal::Float { .. } => None,
        }
    }

    /// Exact floor; `None` for floats.
    pub fn floor_exact(&self) -> Option<BigInt> {
        match self {
            TaggedReal::Rational(r) => Some(r.floor().to_integer()),
            TaggedReal::Quad { .. } => {
                let mut m = BigInt::from(libm::floor(self.to_dd().to_f64()) as i64);
                // certify and adjust; dd puts us within one of the truth
                loop {
                    let mr = BigRational::from(m.clone());
                    if self.cmp_rational(&mr) == Some(Ordering::Less) {
                        m -= 1;
                        continue;
                    }
                    let nr = BigRational::from(&m + 1);
                    if self.cmp_rational(&nr) != Some(Ordering::Less) {
                        m += 1;
                        continue;
                    }
                    return Some(m);
                }
            }
            TaggedReal::Float { .. } => None,
        }
    }

    /// Exact fractional part; `None` for floats.
    pub fn fract_exact(&self) -> Option<TaggedReal> {
        let fl = self.floor_exact()?;
        Some(self.sub(&TaggedReal::Rational(BigRational::from(fl))))
    }

    /// True when the value is an integer, decided exactly where possible.
    pub fn is_integer(&self) -> Result<bool, Undecidable> {
        match self {
            TaggedReal::Rational(r) => Ok(r.is_integer()),
            TaggedReal::Quad { .. } => Ok(false),
            TaggedReal::Float {
                assume_irrational: true,
                ..
            } => Ok(false),
            TaggedReal::Float { .. } => Err(Undecidable),
        }
    }

    /// Canonical text form; see the expression grammar in `hardy`.
    pub fn to_text(&self) -> String {
        match self {
            TaggedReal::Rational(r) => {
                if r.is_integer() {
                    format!("{}", r.numer())
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            }
            TaggedReal::Quad { a, b, d } => {
                let bs = TaggedReal::Rational(b.clone()).to_text();
                let tail = if b.is_one() {
                    format!("sqrt({d})")
                } else {
                    format!("{bs}*sqrt({d})")
                };
                if a.is_zero() {
                    tail
                } else {
                    let as_ = TaggedReal::Rational(a.clone()).to_text();
                    format!("({as_}+{tail})")
                }
            }
            TaggedReal::Float { value, .. } => format!("~{}", value.to_f64()),
        }
    }
}

fn rational_to_dd(r: &BigRational) -> Dd {
    let hi = big_to_f64(r.numer()) / big_to_f64(r.denom());
    // residual (r - hi) computed exactly, then rounded
    let hi_rat = BigRational::from_float(hi);
    match hi_rat {
        Some(h) => {
            let resid = r - h;
            let lo = big_to_f64(resid.numer()) / big_to_f64(resid.denom());
            Dd::new(hi, lo)
        }
        None => Dd::from_f64(hi),
    }
}

fn big_to_f64(b: &BigInt) -> f64 {
    b.to_f64().unwrap_or(f64::INFINITY)
}

/// Express `z = q + r*beta` with rational `q, r`, for irrational quadratic `beta`.
///
/// Returns `None` when `z` has no such representation or the inputs involve
/// untagged floats.
pub fn q_plus_beta_q(z: &TaggedReal, beta: &TaggedReal) -> Option<(BigRational, BigRational)> {
    let (ba, bb, bd) = beta.quad_parts()?;
    if bb.is_zero() {
        return None; // beta must be irrational
    }
    match z {
        TaggedReal::Rational(x) => Some((x.clone(), BigRational::zero())),
        TaggedReal::Quad { a, b, d } if *d == bd => {
            let r = b / &bb;
            let q = a - &r * &ba;
            Some((q, r))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn sqrt_normalizes_square_part() {
        // sqrt(8) = 2 sqrt(2)
        match TaggedReal::sqrt(8) {
            TaggedReal::Quad { a, b, d } => {
                assert!(a.is_zero());
                assert_eq!(b, rat(2, 1));
                assert_eq!(d, 2);
            }
            v => panic!("expected quad, got {v:?}"),
        }
        // sqrt(36) = 6 is rational
        assert_eq!(TaggedReal::sqrt(36), TaggedReal::from_int(6));
    }

    #[test]
    fn quad_field_arithmetic() {
        let s2 = TaggedReal::sqrt(2);
        let prod = s2.mul(&s2);
        assert_eq!(prod, TaggedReal::from_int(2));
        // (1 + sqrt2)(1 - sqrt2) = -1
        let p = TaggedReal::from_int(1).add(&s2);
        let m = TaggedReal::from_int(1).sub(&s2);
        assert_eq!(p.mul(&m), TaggedReal::from_int(-1));
        // 1 / (1 + sqrt2) = sqrt2 - 1
        let inv = TaggedReal::one().div(&p);
        assert_eq!(inv, s2.sub(&TaggedReal::one()));
    }

    #[test]
    fn exact_cancellation_to_rational() {
        let s2 = TaggedReal::sqrt(2);
        let z = s2.sub(&s2);
        assert!(z.is_zero());
        assert_eq!(z.rationality(), Rationality::Rational);
    }

    #[test]
    fn floor_of_quad() {
        let s2 = TaggedReal::sqrt(2);
        assert_eq!(s2.floor_exact(), Some(BigInt::from(1)));
        let v = TaggedReal::from_int(100). mul(&s2); // 141.42...
        assert_eq!(v.floor_exact(), Some(BigInt::from(141)));
        let neg = s2.neg(); // -1.414...
        assert_eq!(neg.floor_exact(), Some(BigInt::from(-2)));
    }

    #[test]
    fn rationality_flags() {
        assert_eq!(
            TaggedReal::float(1.4142, false).is_rational(),
            Err(Undecidable)
        );
        assert_eq!(TaggedReal::float(1.4142, true).is_rational(), Ok(false));
        assert_eq!(TaggedReal::ratio(3, 7).is_rational(), Ok(true));
        assert_eq!(TaggedReal::sqrt(5).is_rational(), Ok(false));
    }

    #[test]
    fn q_plus_beta_decomposition() {
        let beta = TaggedReal::sqrt(2);
        // z = 1/2 + 3 beta
        let z = TaggedReal::ratio(1, 2).add(&TaggedReal::from_int(3).mul(&beta));
        let (q, r) = q_plus_beta_q(&z, &beta).unwrap();
        assert_eq!(q, rat(1, 2));
        assert_eq!(r, rat(3, 1));
        // beta' = 1 + sqrt 2, z = 2 + sqrt 2 = 1 + beta'
        let beta2 = TaggedReal::from_int(1).add(&beta);
        let z2 = TaggedReal::from_int(2).add(&TaggedReal::sqrt(2));
        let (q2, r2) = q_plus_beta_q(&z2, &beta2).unwrap();
        assert_eq!(q2, rat(1, 1));
        assert_eq!(r2, rat(1, 1));
    }

    #[test]
    fn dd_conversion_accuracy() {
        let v = TaggedReal::sqrt(2).to_dd();
        let resid = (v * v - Dd::from_f64(2.0)).to_f64().abs();
        assert!(resid < 1e-30);
        let r = TaggedReal::ratio(1, 3).to_dd();
        assert!((r.mul_f64(3.0) - Dd::ONE).to_f64().abs() < 1e-31);
    }
}
