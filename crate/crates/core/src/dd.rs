//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s giving
//! roughly 106 bits of significand.
//!
//! All products use the Dekker split rather than a hardware FMA, so results do
//! not depend on the target's `fma` support.

use core::cmp::Ordering;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // requires |a| >= |b|
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    const C: f64 = 134217729.0; // 2^27 + 1
    let t = C * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// ln 2 to double-double precision.
    pub const LN2: Dd = Dd {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };
    /// pi to double-double precision.
    pub const PI: Dd = Dd {
        hi: 3.141_592_653_589_793,
        lo: 1.224_646_799_147_353_2e-16,
    };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Dd {
        let (s, e) = two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact conversion for `|v| < 2^100`.
    pub fn from_i128(v: i128) -> Dd {
        debug_assert!(v.unsigned_abs() < (1u128 << 100));
        let hi = v as f64; // rounded
        let rem = v - hi as i128; // |rem| <= ulp(hi)/2 < 2^53, exact in f64
        Dd::new(hi, rem as f64)
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (s, t) = quick_two_sum(p, e + self.lo * b);
        Dd { hi: s, lo: t }
    }

    /// Multiply by a power of two (exact).
    #[inline]
    pub fn ldexp(self, k: i32) -> Dd {
        Dd {
            hi: libm::ldexp(self.hi, k),
            lo: libm::ldexp(self.lo, k),
        }
    }

    pub fn recip(self) -> Dd {
        Dd::ONE / self
    }

    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ZERO;
        }
        let x = libm::sqrt(self.hi);
        // One Newton step on top of the f64 estimate.
        let x2 = two_prod(x, x);
        let r = ((self.hi - x2.0) - x2.1) + self.lo;
        let dx = r / (2.0 * x);
        let (s, e) = quick_two_sum(x, dx);
        Dd { hi: s, lo: e }
    }

    /// Largest integer `<= self`, exact.
    pub fn floor(self) -> Dd {
        let fh = libm::floor(self.hi);
        if fh == self.hi {
            let fl = libm::floor(self.lo);
            let (s, e) = two_sum(fh, fl);
            Dd { hi: s, lo: e }
        } else {
            Dd { hi: fh, lo: 0.0 }
        }
    }

    /// Fractional part in `[0, 1)`, exact.
    pub fn fract(self) -> Dd {
        self - self.floor()
    }

    /// exp(self) with relative error around 2^-100.
    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -709.0 {
            return Dd::ZERO;
        }
        // self = m ln2 + r, |r| <= ln2 / 2; then scale r by 2^-9 and square back.
        let m = libm::round((self / Dd::LN2).to_f64());
        let r = (self - Dd::LN2.mul_f64(m)).ldexp(-9);
        // Taylor for exp(r) - 1, |r| < 7e-4: 12 terms reach < 2^-107.
        let mut term = r;
        let mut sum = r;
        for k in 2..=12 {
            term = term * r / Dd::from_f64(k as f64);
            sum = sum + term;
        }
        // (1+s)^2 - 1 = 2s + s^2, nine times.
        let mut s = sum;
        for _ in 0..9 {
            s = s.ldexp(1) + s * s;
        }
        (s + Dd::ONE).ldexp(m as i32)
    }

    /// Natural logarithm with relative error around 2^-100. Requires `self > 0`.
    pub fn ln(self) -> Dd {
        debug_assert!(self.hi > 0.0);
        let mut y = Dd::from_f64(libm::log(self.hi));
        // Newton: y <- y + x e^{-y} - 1, doubling correct bits each pass.
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    /// self^(p/q) for self > 0.
    pub fn pow_frac(self, p: i64, q: i64) -> Dd {
        debug_assert!(q != 0);
        if p == 0 {
            return Dd::ONE;
        }
        (self.ln() * Dd::from_f64(p as f64) / Dd::from_f64(q as f64)).exp()
    }

    pub fn powi(self, mut n: u32) -> Dd {
        let mut base = self;
        let mut acc = Dd::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let e = e + self.lo + b.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + self.hi * b.lo + self.lo * b.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd::new(s, e + q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}
