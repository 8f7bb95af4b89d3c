//! Complex scalars and deterministic summation.
//!
//! Averages are accumulated in fixed-width chunks combined by a fixed binary
//! tree, so a parallel driver that maps chunks to threads reproduces the
//! serial result bit for bit.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Chunk width for the deterministic reduction tree.
pub const CHUNK: u64 = 4096;

#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl Cx {
    pub const ZERO: Cx = Cx { re: 0.0, im: 0.0 };
    pub const ONE: Cx = Cx { re: 1.0, im: 0.0 };

    #[inline]
    pub fn new(re: f64, im: f64) -> Cx {
        Cx { re, im }
    }

    #[inline]
    pub fn conj(self) -> Cx {
        Cx::new(self.re, -self.im)
    }

    #[inline]
    pub fn abs(self) -> f64 {
        libm::hypot(self.re, self.im)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn scale(self, s: f64) -> Cx {
        Cx::new(self.re * s, self.im * s)
    }

    pub fn div(self, d: Cx) -> Cx {
        let n = d.norm_sq();
        Cx::new(
            (self.re * d.re + self.im * d.im) / n,
            (self.im * d.re - self.re * d.im) / n,
        )
    }
}

impl Add for Cx {
    type Output = Cx;
    #[inline]
    fn add(self, o: Cx) -> Cx {
        Cx::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for Cx {
    #[inline]
    fn add_assign(&mut self, o: Cx) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for Cx {
    type Output = Cx;
    #[inline]
    fn sub(self, o: Cx) -> Cx {
        Cx::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for Cx {
    type Output = Cx;
    #[inline]
    fn neg(self) -> Cx {
        Cx::new(-self.re, -self.im)
    }
}

impl Mul for Cx {
    type Output = Cx;
    #[inline]
    fn mul(self, o: Cx) -> Cx {
        Cx::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// e(theta) = exp(2 pi i theta); `theta` is a fraction of a full turn.
///
/// Quarter turns come out exactly so that rational-lattice cancellations
/// stay exact.
#[inline]
pub fn e_unit(theta: f64) -> Cx {
    let t = theta - libm::floor(theta);
    if t == 0.0 {
        return Cx::ONE;
    }
    if t == 0.5 {
        return Cx::new(-1.0, 0.0);
    }
    if t == 0.25 {
        return Cx::new(0.0, 1.0);
    }
    if t == 0.75 {
        return Cx::new(0.0, -1.0);
    }
    let phi = 2.0 * core::f64::consts::PI * t;
    Cx::new(libm::cos(phi), libm::sin(phi))
}

/// Sum of one chunk `[lo, hi)` in index order.
pub fn chunk_sum<F: Fn(u64) -> Cx>(lo: u64, hi: u64, f: &F) -> Cx {
    let mut acc = Cx::ZERO;
    for n in lo..hi {
        acc += f(n);
    }
    acc
}

/// Combine chunk sums by a fixed pairwise tree.
pub fn combine_pairwise(mut v: Vec<Cx>) -> Cx {
    if v.is_empty() {
        return Cx::ZERO;
    }
    while v.len() > 1 {
        let mut next = Vec::with_capacity(v.len().div_ceil(2));
        for pair in v.chunks(2) {
            next.push(if pair.len() == 2 {
                pair[0] + pair[1]
            } else {
                pair[0]
            });
        }
        v = next;
    }
    v[0]
}

/// Chunk boundaries of `[lo, hi)` at the fixed width.
pub fn chunk_ranges(lo: u64, hi: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = lo;
    while a < hi {
        let b = (a + CHUNK).min(hi);
        out.push((a, b));
        a = b;
    }
    out
}

/// Serial deterministic sum of `f(n)` over `[lo, hi)`.
pub fn tree_sum<F: Fn(u64) -> Cx>(lo: u64, hi: u64, f: &F) -> Cx {
    let sums: Vec<Cx> = chunk_ranges(lo, hi)
        .into_iter()
        .map(|(a, b)| chunk_sum(a, b, f))
        .collect();
    combine_pairwise(sums)
}

/// Serial deterministic average of `f(n)` over `n in [1, n_max]`.
pub fn tree_average<F: Fn(u64) -> Cx>(n_max: u64, f: &F) -> Cx {
    if n_max == 0 {
        return Cx::ZERO;
    }
    tree_sum(1, n_max + 1, f).scale(1.0 / n_max as f64)
}
