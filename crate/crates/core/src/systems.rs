//! Desk-scale measure-preserving systems with commuting transformations and
//! observables whose integrals and L2 norms are exact: cyclic shifts, torus
//! rotations, and hyperbolic toral automorphisms, closed under products.
//!
//! A system is a list of blocks; every one of the `ell` transformations acts
//! on each block (possibly as the identity), so product systems reuse the same
//! machinery.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use alloc::{string::String, vec};
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::dd::Dd;
use crate::sum::{e_unit, Cx};
use crate::tagged::TaggedReal;

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    /// Z_modulus with one shift per transformation.
    Finite { modulus: u64, shifts: Vec<i64> },
    /// T^dim with one rotation vector per transformation.
    Rotation {
        dim: usize,
        alphas: Vec<Vec<TaggedReal>>,
    },
    /// T^dim with one unimodular integer matrix per transformation.
    Automorphism { dim: usize, mats: Vec<IntMat> },
}

impl Block {
    fn dim(&self) -> usize {
        match self {
            Block::Finite { .. } => 1,
            Block::Rotation { dim, .. } | Block::Automorphism { dim, .. } => *dim,
        }
    }
}

/// Row-major integer matrix.
pub type IntMat = Vec<Vec<i64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub ell: usize,
    pub blocks: Vec<Block>,
    /// Bit budget for automorphism-driven frequency growth.
    pub freq_bit_budget: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemsError {
    SpaceMismatch,
    FrequencyOverflow,
    NonCommuting,
    BadDeterminant,
    BadShape(String),
}

impl fmt::Display for SystemsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemsError::SpaceMismatch => write!(f, "observables live on different spaces"),
            SystemsError::FrequencyOverflow => {
                write!(f, "frequency entries exceeded the bit budget")
            }
            SystemsError::NonCommuting => write!(f, "transformations do not commute"),
            SystemsError::BadDeterminant => write!(f, "matrix determinant is not +-1"),
            SystemsError::BadShape(s) => write!(f, "bad system shape: {s}"),
        }
    }
}

pub const DEFAULT_FREQ_BITS: u64 = 512;

impl System {
    /// Cyclic rotations on Z_modulus.
    pub fn finite_cyclic(modulus: u64, shifts: Vec<i64>) -> Result<System, SystemsError> {
        if modulus == 0 {
            return Err(SystemsError::BadShape("zero modulus".into()));
        }
        Ok(System {
            ell: shifts.len(),
            blocks: vec![Block::Finite { modulus, shifts }],
            freq_bit_budget: DEFAULT_FREQ_BITS,
        })
    }

    /// Rotations of T^dim; `alphas[j]` is the j-th rotation vector.
    pub fn torus_rotation(
        dim: usize,
        alphas: Vec<Vec<TaggedReal>>,
    ) -> Result<System, SystemsError> {
        if alphas.iter().any(|a| a.len() != dim) {
            return Err(SystemsError::BadShape("rotation vector length".into()));
        }
        Ok(System {
            ell: alphas.len(),
            blocks: vec![Block::Rotation { dim, alphas }],
            freq_bit_budget: DEFAULT_FREQ_BITS,
        })
    }

    /// Commuting unimodular automorphisms of T^dim.
    pub fn toral_automorphism(dim: usize, mats: Vec<IntMat>) -> Result<System, SystemsError> {
        for m in &mats {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(SystemsError::BadShape("matrix dimensions".into()));
            }
            let d = det_i64(m);
            if d != 1 && d != -1 {
                return Err(SystemsError::BadDeterminant);
            }
        }
        for i in 0..mats.len() {
            for j in (i + 1)..mats.len() {
                if mat_mul_i64(&mats[i], &mats[j]) != mat_mul_i64(&mats[j], &mats[i]) {
                    return Err(SystemsError::NonCommuting);
                }
            }
        }
        Ok(System {
            ell: mats.len(),
            blocks: vec![Block::Automorphism { dim, mats }],
            freq_bit_budget: DEFAULT_FREQ_BITS,
        })
    }

    /// Total frequency dimension (one coordinate per finite block, `dim` per torus block).
    pub fn freq_dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    /// The `ell`-fold product system: transformation `j` acts on copy `j` only.
    pub fn product_power(&self) -> System {
        let ell = self.ell;
        let mut blocks = Vec::new();
        for copy in 0..ell {
            for b in &self.blocks {
                blocks.push(match b {
                    Block::Finite { modulus, shifts } => Block::Finite {
                        modulus: *modulus,
                        shifts: (0..ell)
                            .map(|j| if j == copy { shifts[j] } else { 0 })
                            .collect(),
                    },
                    Block::Rotation { dim, alphas } => Block::Rotation {
                        dim: *dim,
                        alphas: (0..ell)
                            .map(|j| {
                                if j == copy {
                                    alphas[j].clone()
                                } else {
                                    vec![TaggedReal::zero(); *dim]
                                }
                            })
                            .collect(),
                    },
                    Block::Automorphism { dim, mats } => Block::Automorphism {
                        dim: *dim,
                        mats: (0..ell)
                            .map(|j| {
                                if j == copy {
                                    mats[j].clone()
                                } else {
                                    identity_mat(*dim)
                                }
                            })
                            .collect(),
                    },
                });
            }
        }
        System {
            ell,
            blocks,
            freq_bit_budget: self.freq_bit_budget,
        }
    }

    /// Tensor of two systems over the same transformation count.
    pub fn tensor(&self, other: &System) -> Result<System, SystemsError> {
        if self.ell != other.ell {
            return Err(SystemsError::SpaceMismatch);
        }
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().cloned());
        Ok(System {
            ell: self.ell,
            blocks,
            freq_bit_budget: self.freq_bit_budget.min(other.freq_bit_budget),
        })
    }

    /// State count when every block is finite.
    pub fn finite_size(&self) -> Option<u64> {
        let mut size = 1u64;
        for b in &self.blocks {
            match b {
                Block::Finite { modulus, .. } => size = size.checked_mul(*modulus)?,
                _ => return None,
            }
        }
        Some(size)
    }

    /// Per-block moduli when the system is finite.
    pub fn finite_moduli(&self) -> Option<Vec<u64>> {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Finite { modulus, .. } => Some(*modulus),
                _ => None,
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// Frequency-side representation: finitely many integer frequency vectors
/// with complex coefficients. Integrals and L2 norms are exact by Parseval.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Observable {
    pub coeffs: BTreeMap<Vec<BigInt>, Cx>,
}

impl Observable {
    pub fn zero() -> Observable {
        Observable::default()
    }

    pub fn constant(c: Cx, freq_dim: usize) -> Observable {
        let mut coeffs = BTreeMap::new();
        if c != Cx::ZERO {
            coeffs.insert(vec![BigInt::zero(); freq_dim], c);
        }
        Observable { coeffs }
    }

    /// The character e(k . x).
    pub fn character(freq: Vec<BigInt>) -> Observable {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(freq, Cx::ONE);
        Observable { coeffs }
    }

    pub fn character_i64(freq: &[i64]) -> Observable {
        Observable::character(freq.iter().map(|&k| BigInt::from(k)).collect())
    }

    pub fn add_term(&mut self, freq: Vec<BigInt>, c: Cx) {
        *self.coeffs.entry(freq).or_insert(Cx::ZERO) += c;
    }

    pub fn prune(&mut self) {
        self.coeffs.retain(|_, c| *c != Cx::ZERO);
    }

    pub fn conj(&self) -> Observable {
        let mut coeffs = BTreeMap::new();
        for (k, c) in &self.coeffs {
            coeffs.insert(k.iter().map(|v| -v).collect(), c.conj());
        }
        Observable { coeffs }
    }

    pub fn scale(&self, s: Cx) -> Observable {
        Observable {
            coeffs: self
                .coeffs
                .iter()
                .map(|(k, c)| (k.clone(), *c * s))
                .collect(),
        }
    }

    pub fn add(&self, other: &Observable) -> Observable {
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            out.add_term(k.clone(), *c);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        self.add(&other.scale(Cx::new(-1.0, 0.0)))
    }

    /// Pointwise product (frequency convolution).
    pub fn mul(&self, other: &Observable) -> Observable {
        let mut out = Observable::zero();
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &other.coeffs {
                let k: Vec<BigInt> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                out.add_term(k, *c1 * *c2);
            }
        }
        out.prune();
        out
    }

    /// Tensor with an observable on another factor (frequency concatenation).
    pub fn tensor(&self, other: &Observable) -> Observable {
        let mut out = Observable::zero();
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &other.coeffs {
                let mut k = k1.clone();
                k.extend(k2.iter().cloned());
                out.add_term(k, *c1 * *c2);
            }
        }
        out.prune();
        out
    }

    /// Exact integral: the coefficient at frequency zero.
    pub fn integral(&self) -> Cx {
        self.coeffs
            .iter()
            .find(|(k, _)| k.iter().all(|v| v.is_zero()))
            .map(|(_, c)| *c)
            .unwrap_or(Cx::ZERO)
    }

    /// Exact squared L2 norm (Parseval).
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sq()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.l2_norm_sq())
    }

    /// Exact inner product `int f conj(g)`.
    pub fn inner(&self, other: &Observable) -> Cx {
        let mut acc = Cx::ZERO;
        for (k, c) in &self.coeffs {
            if let Some(c2) = other.coeffs.get(k) {
                acc += *c * c2.conj();
            }
        }
        acc
    }

    /// Sup-norm upper bound: sum of coefficient magnitudes.
    pub fn linf_bound(&self) -> f64 {
        self.coeffs.values().map(|c| c.abs()).sum()
    }

    pub fn support_radius(&self) -> u64 {
        self.coeffs
            .keys()
            .flat_map(|k| k.iter())
            .map(|v| v.abs().to_u64().unwrap_or(u64::MAX))
            .max()
            .unwrap_or(0)
    }
}

pub fn l2_distance(f: &Observable, g: &Observable) -> f64 {
    f.sub(g).l2_norm()
}

/// Reduce finite-block frequencies mod the modulus into `[0, M)`.
pub fn canonicalize_finite(sys: &System, f: &Observable) -> Observable {
    let mut out = Observable::zero();
    for (k, c) in &f.coeffs {
        let mut k2 = k.clone();
        let mut off = 0usize;
        for b in &sys.blocks {
            if let Block::Finite { modulus, .. } = b {
                let m = BigInt::from(*modulus);
                k2[off] = k2[off].mod_floor(&m);
            }
            off += b.dim();
        }
        out.add_term(k2, *c);
    }
    out.prune();
    out
}

/// Table of values on a finite system, row-major over the block moduli.
pub fn table_to_observable(sys: &System, values: &[Cx]) -> Result<Observable, SystemsError> {
    let moduli = sys
        .finite_moduli()
        .ok_or(SystemsError::BadShape("table needs a finite system".into()))?;
    let size: u64 = moduli.iter().product();
    if values.len() as u64 != size {
        return Err(SystemsError::BadShape("table length".into()));
    }
    let dims = moduli.len();
    let mut out = Observable::zero();
    let mut freq = vec![0u64; dims];
    loop {
        let mut acc = Cx::ZERO;
        let mut idx = vec![0u64; dims];
        loop {
            let mut flat = 0u64;
            let mut phase = 0.0f64;
            for a in 0..dims {
                flat = flat * moduli[a] + idx[a];
                phase += (freq[a] * idx[a]) as f64 / moduli[a] as f64;
            }
            acc += values[flat as usize] * e_unit(-(phase - libm::floor(phase)));
            if !incr(&mut idx, &moduli) {
                break;
            }
        }
        let c = acc.scale(1.0 / size as f64);
        if c.abs() > 1e-14 {
            out.add_term(freq.iter().map(|&k| BigInt::from(k)).collect(), c);
        }
        if !incr(&mut freq, &moduli) {
            break;
        }
    }
    Ok(out)
}

/// Evaluate a finite-system observable on the full state grid.
pub fn observable_to_table(sys: &System, f: &Observable) -> Result<Vec<Cx>, SystemsError> {
    let moduli = sys
        .finite_moduli()
        .ok_or(SystemsError::BadShape("table needs a finite system".into()))?;
    let size: u64 = moduli.iter().product();
    let dims = moduli.len();
    let mut out = vec![Cx::ZERO; size as usize];
    let canon = canonicalize_finite(sys, f);
    let mut idx = vec![0u64; dims];
    loop {
        let mut flat = 0u64;
        for a in 0..dims {
            flat = flat * moduli[a] + idx[a];
        }
        let mut acc = Cx::ZERO;
        for (k, c) in &canon.coeffs {
            let mut phase = 0.0f64;
            for a in 0..dims {
                let kk = k[a].to_u64().unwrap_or(0);
                phase += (kk * idx[a]) as f64 / moduli[a] as f64;
            }
            acc += *c * e_unit(phase - libm::floor(phase));
        }
        out[flat as usize] = acc;
        if !incr(&mut idx, &moduli) {
            break;
        }
    }
    Ok(out)
}

fn incr(idx: &mut [u64], moduli: &[u64]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < moduli[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

// ---------------------------------------------------------------------------
// Pullback
// ---------------------------------------------------------------------------

/// Exponents for all transformations at once: `f o T_1^{v_1} ... T_ell^{v_ell}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExpVec(pub Vec<i64>);

impl ExpVec {
    pub fn zero(ell: usize) -> ExpVec {
        ExpVec(vec![0; ell])
    }

    pub fn single(ell: usize, j: usize, n: i64) -> ExpVec {
        let mut v = vec![0; ell];
        v[j] = n;
        ExpVec(v)
    }
}

/// Exact pullback `f o T_j^n`.
///
/// Rotations multiply each coefficient by `e(n k . alpha_j)`; automorphisms map
/// the frequency through the transposed matrix power; finite shifts rotate the
/// character phase.
pub fn pullback(
    sys: &System,
    j: usize,
    n: i64,
    f: &Observable,
) -> Result<Observable, SystemsError> {
    pullback_vec(sys, &ExpVec::single(sys.ell, j, n), f)
}

pub fn pullback_vec(
    sys: &System,
    exps: &ExpVec,
    f: &Observable,
) -> Result<Observable, SystemsError> {
    let mut out = Observable::zero();
    for (k, c) in &f.coeffs {
        let (k2, phase) = transform_freq(sys, exps, k)?;
        out.add_term(k2, *c * e_unit(phase));
    }
    out.prune();
    Ok(out)
}

/// Frequency image and phase of `T^exps` acting on the character `k`:
/// `e(k.x) o T^exps = e(phase) e(k'.x)`.
pub fn transform_freq(
    sys: &System,
    exps: &ExpVec,
    k: &[BigInt],
) -> Result<(Vec<BigInt>, f64), SystemsError> {
    let mut k2 = k.to_vec();
    let mut phase = Dd::ZERO;
    let mut off = 0usize;
    for b in &sys.blocks {
        match b {
            Block::Finite { modulus, shifts } => {
                let m = BigInt::from(*modulus);
                let mut add = BigInt::zero();
                for (j, &s) in shifts.iter().enumerate() {
                    add += BigInt::from(exps.0[j]) * BigInt::from(s) * &k[off];
                }
                let r = add.mod_floor(&m);
                phase = phase
                    + Dd::from_f64(r.to_f64().unwrap_or(0.0)) / Dd::from_f64(*modulus as f64);
            }
            Block::Rotation { dim, alphas } => {
                for (j, alpha) in alphas.iter().enumerate() {
                    if exps.0[j] == 0 {
                        continue;
                    }
                    let mut dot = TaggedReal::zero();
                    for i in 0..*dim {
                        if k[off + i].is_zero() {
                            continue;
                        }
                        let ki = TaggedReal::Rational(BigRational::from(k[off + i].clone()));
                        dot = dot.add(&ki.mul(&alpha[i]));
                    }
                    phase = phase + rotation_phase(exps.0[j], &dot);
                }
            }
            Block::Automorphism { dim, mats } => {
                let mut vec_k: Vec<BigInt> = k[off..off + dim].to_vec();
                for (j, m) in mats.iter().enumerate() {
                    if exps.0[j] != 0 {
                        vec_k = mat_pow_transpose_apply(m, exps.0[j], &vec_k)?;
                    }
                }
                for (i, v) in vec_k.into_iter().enumerate() {
                    if v.bits() > sys.freq_bit_budget {
                        return Err(SystemsError::FrequencyOverflow);
                    }
                    k2[off + i] = v;
                }
            }
        }
        off += b.dim();
    }
    Ok((k2, phase.fract().to_f64()))
}

/// Fractional part of `n * dot`, exact over rationals, double-double otherwise.
fn rotation_phase(n: i64, dot: &TaggedReal) -> Dd {
    match dot {
        TaggedReal::Rational(r) => {
            let num = r.numer() * BigInt::from(n);
            let red = num.mod_floor(r.denom());
            Dd::from_f64(red.to_f64().unwrap_or(0.0))
                / Dd::from_f64(r.denom().to_f64().unwrap_or(1.0))
        }
        _ => (Dd::from_i128(n as i128) * dot.to_dd()).fract(),
    }
}

// ---------------------------------------------------------------------------
// Integer matrices
// ---------------------------------------------------------------------------

pub fn identity_mat(dim: usize) -> IntMat {
    (0..dim)
        .map(|i| (0..dim).map(|j| i64::from(i == j)).collect())
        .collect()
}

pub fn det_i64(m: &IntMat) -> i64 {
    let n = m.len();
    match n {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut acc = 0i64;
            for j in 0..n {
                let minor: IntMat = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let s = if j % 2 == 0 { 1 } else { -1 };
                acc += s * m[0][j] * det_i64(&minor);
            }
            acc
        }
    }
}

pub fn mat_mul_i64(a: &IntMat, b: &IntMat) -> IntMat {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Integer inverse via the adjugate; valid for `det = +-1`.
pub fn mat_inverse_unimodular(m: &IntMat) -> IntMat {
    let n = m.len();
    let d = det_i64(m);
    debug_assert!(d == 1 || d == -1);
    let mut adj = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: IntMat = m
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != i)
                .map(|(_, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, &v)| v)
                        .collect()
                })
                .collect();
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[j][i] = s * if n == 1 { 1 } else { det_i64(&minor) } * d;
        }
    }
    adj
}

type BigMat = Vec<Vec<BigInt>>;

fn to_big(m: &IntMat) -> BigMat {
    m.iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect()
}

fn big_mat_mul(a: &BigMat, b: &BigMat) -> BigMat {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn big_mat_vec(a: &BigMat, v: &[BigInt]) -> Vec<BigInt> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum())
        .collect()
}

/// `(M^T)^n k` by binary exponentiation; negative `n` uses the unimodular inverse.
pub fn mat_pow_transpose_apply(
    m: &IntMat,
    n: i64,
    k: &[BigInt],
) -> Result<Vec<BigInt>, SystemsError> {
    let dim = m.len();
    let base_i64 = if n >= 0 {
        m.clone()
    } else {
        mat_inverse_unimodular(m)
    };
    let mut t = vec![vec![0i64; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            t[j][i] = base_i64[i][j];
        }
    }
    let mut result = k.to_vec();
    let mut e = n.unsigned_abs();
    let mut base = to_big(&t);
    while e > 0 {
        if e & 1 == 1 {
            result = big_mat_vec(&base, &result);
        }
        e >>= 1;
        if e > 0 {
            base = big_mat_mul(&base, &base);
        }
        if result.iter().any(|v| v.bits() > 4096) {
            return Err(SystemsError::FrequencyOverflow);
        }
    }
    Ok(result)
}

/// `M^n mod q` for exact pointwise dynamics on rational grids.
pub fn mat_pow_mod(m: &IntMat, n: u64, q: u64) -> Vec<Vec<u64>> {
    let dim = m.len();
    let qb = q as i128;
    let reduce = |v: i64| -> u64 { (((v as i128) % qb + qb) % qb) as u64 };
    let mut base: Vec<Vec<u64>> = m
        .iter()
        .map(|r| r.iter().map(|&v| reduce(v)).collect())
        .collect();
    let mut acc: Vec<Vec<u64>> = (0..dim)
        .map(|i| (0..dim).map(|j| u64::from(i == j)).collect())
        .collect();
    let mul = |a: &Vec<Vec<u64>>, b: &Vec<Vec<u64>>| -> Vec<Vec<u64>> {
        (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let mut s: u128 = 0;
                        for k in 0..dim {
                            s += a[i][k] as u128 * b[k][j] as u128;
                        }
                        (s % q as u128) as u64
                    })
                    .collect()
            })
            .collect()
    };
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(&acc, &base);
        }
        base = mul(&base, &base);
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat_map() -> IntMat {
        vec![vec![2, 1], vec![1, 1]]
    }

    #[test]
    fn rotation_quarter_turn() {
        // alpha = 1/4, f = e(x), n = 1 -> coefficient phase i
        let sys = System::torus_rotation(1, vec![vec![TaggedReal::ratio(1, 4)]]).unwrap();
        let f = Observable::character_i64(&[1]);
        let g = pullback(&sys, 0, 1, &f).unwrap();
        let c = g.coeffs.values().next().unwrap();
        assert!((*c - Cx::new(0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn cat_map_transposed_action() {
        // frequency (1,0) -> M^T (1,0) = (2,1)
        let sys = System::toral_automorphism(2, vec![cat_map()]).unwrap();
        let f = Observable::character_i64(&[1, 0]);
        let g = pullback(&sys, 0, 1, &f).unwrap();
        let k = g.coeffs.keys().next().unwrap();
        assert_eq!(k[0], BigInt::from(2));
        assert_eq!(k[1], BigInt::from(1));
    }

    #[test]
    fn rotation_large_power_phase_oracle() {
        // alpha = sqrt(2), n = 10^6: frac(n alpha) = 0.56237309504880169 (220-bit oracle)
        let sys = System::torus_rotation(1, vec![vec![TaggedReal::sqrt(2)]]).unwrap();
        let f = Observable::character_i64(&[1]);
        let g = pullback(&sys, 0, 1_000_000, &f).unwrap();
        let c = g.coeffs.values().next().unwrap();
        assert!((c.abs() - 1.0).abs() < 1e-14);
        let want = e_unit(0.5623730950488017);
        assert!((*c - want).abs() < 1e-9);
    }

    #[test]
    fn pullback_is_group_action() {
        let sys = System::torus_rotation(1, vec![vec![TaggedReal::sqrt(3)]]).unwrap();
        let f = Observable::character_i64(&[2]);
        let a = pullback(&sys, 0, 7, &pullback(&sys, 0, 5, &f).unwrap()).unwrap();
        let b = pullback(&sys, 0, 12, &f).unwrap();
        assert_eq!(
            a.coeffs.keys().collect::<Vec<_>>(),
            b.coeffs.keys().collect::<Vec<_>>()
        );
        let ca = a.coeffs.values().next().unwrap();
        let cb = b.coeffs.values().next().unwrap();
        assert!((*ca - *cb).abs() < 1e-13);
    }

    #[test]
    fn pullback_preserves_l2_and_integral() {
        let sys = System::toral_automorphism(2, vec![cat_map()]).unwrap();
        let mut f = Observable::character_i64(&[1, 0]).scale(Cx::new(0.5, 0.25));
        f.add_term(vec![BigInt::zero(), BigInt::zero()], Cx::new(3.0, 0.0));
        for n in [-3i64, 1, 5] {
            let g = pullback(&sys, 0, n, &f).unwrap();
            assert!((g.l2_norm_sq() - f.l2_norm_sq()).abs() < 1e-14);
            assert!((g.integral() - f.integral()).abs() < 1e-15);
        }
    }

    #[test]
    fn commuting_pullbacks() {
        let sys = System::finite_cyclic(12, vec![3, 5]).unwrap();
        let f = Observable::character_i64(&[7]);
        let a = pullback(&sys, 0, 2, &pullback(&sys, 1, 3, &f).unwrap()).unwrap();
        let b = pullback(&sys, 1, 3, &pullback(&sys, 0, 2, &f).unwrap()).unwrap();
        assert_eq!(
            a.coeffs.keys().collect::<Vec<_>>(),
            b.coeffs.keys().collect::<Vec<_>>()
        );
        let (ca, cb) = (
            *a.coeffs.values().next().unwrap(),
            *b.coeffs.values().next().unwrap(),
        );
        assert!((ca - cb).abs() < 1e-15);
    }

    #[test]
    fn integral_and_l2_examples() {
        // f = 3 + e(x): integral 3; l2_distance(e(x), 0) = 1
        let mut f = Observable::character_i64(&[1]);
        f.add_term(vec![BigInt::zero()], Cx::new(3.0, 0.0));
        assert_eq!(f.integral(), Cx::new(3.0, 0.0));
        let e1 = Observable::character_i64(&[1]);
        assert!((l2_distance(&e1, &Observable::zero()) - 1.0).abs() < 1e-15);
        // f = e(x)+e(2x), g = e(x): distance 1
        let mut f2 = Observable::character_i64(&[1]);
        f2.add_term(alloc::vec![BigInt::from(2)], Cx::ONE);
        assert!((l2_distance(&f2, &e1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn product_system_wiring() {
        // two rotations -> rotations of T^2 acting on separate coordinates
        let sys =
            System::torus_rotation(1, vec![vec![TaggedReal::sqrt(2)], vec![TaggedReal::sqrt(3)]])
                .unwrap();
        let prod = sys.product_power();
        assert_eq!(prod.freq_dim(), 2);
        // T_1 fixes a character that only sees coordinate 2
        let f = Observable::character_i64(&[0, 1]);
        let g = pullback(&prod, 0, 9, &f).unwrap();
        let c = g.coeffs.values().next().unwrap();
        assert!((*c - Cx::ONE).abs() < 1e-14);
    }

    #[test]
    fn tensor_mean_zero() {
        let f = Observable::character_i64(&[1]);
        let g = Observable::character_i64(&[2]);
        let t = f.tensor(&g);
        assert_eq!(t.integral(), Cx::ZERO);
        assert_eq!(t.coeffs.len(), 1);
    }

    #[test]
    fn finite_cyclic_squared() {
        let sys = System::finite_cyclic(5, vec![1, 1]).unwrap();
        let prod = sys.product_power();
        assert_eq!(prod.finite_size(), Some(25));
    }

    #[test]
    fn cat_map_finite_time_mixing() {
        // mean-zero f, g: the correlation integral is exactly zero once the
        // shifted frequency supports are disjoint
        let sys = System::toral_automorphism(2, vec![cat_map()]).unwrap();
        let f = Observable::character_i64(&[1, 0]);
        let g = Observable::character_i64(&[0, 1]);
        for n in 2..12 {
            let gs = pullback(&sys, 0, n, &g).unwrap();
            let corr = f.mul(&gs).integral(); // int f * (g o T^n)
            assert_eq!(corr, Cx::ZERO, "n={n}");
        }
    }

    #[test]
    fn frequency_overflow_reported() {
        let mut sys = System::toral_automorphism(2, vec![cat_map()]).unwrap();
        sys.freq_bit_budget = 32;
        let f = Observable::character_i64(&[1, 0]);
        let r = pullback(&sys, 0, 100, &f);
        assert_eq!(r.unwrap_err(), SystemsError::FrequencyOverflow);
    }

    #[test]
    fn non_commuting_rejected() {
        let a = vec![vec![1, 1], vec![0, 1]];
        let b = vec![vec![1, 0], vec![1, 1]];
        assert_eq!(
            System::toral_automorphism(2, vec![a, b]).unwrap_err(),
            SystemsError::NonCommuting
        );
    }

    #[test]
    fn determinant_checked() {
        let m = vec![vec![2, 0], vec![0, 1]];
        assert_eq!(
            System::toral_automorphism(2, vec![m]).unwrap_err(),
            SystemsError::BadDeterminant
        );
    }

    #[test]
    fn table_round_trip() {
        let sys = System::finite_cyclic(6, vec![1]).unwrap();
        let vals: Vec<Cx> = (0..6)
            .map(|i| Cx::new(i as f64, -(i as f64) / 2.0))
            .collect();
        let obs = table_to_observable(&sys, &vals).unwrap();
        let back = observable_to_table(&sys, &obs).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert!((*a - *b).abs() < 1e-12);
        }
        let mean = vals.iter().fold(Cx::ZERO, |s, v| s + *v).scale(1.0 / 6.0);
        assert!((obs.integral() - mean).abs() < 1e-13);
    }

    #[test]
    fn mat_pow_mod_matches_direct() {
        let m = cat_map();
        let p = mat_pow_mod(&m, 5, 97);
        // M^5 = [[89, 55], [55, 34]]
        assert_eq!(p[0][0], 89 % 97);
        assert_eq!(p[0][1], 55);
        assert_eq!(p[1][1], 34);
    }

    #[test]
    fn unimodular_inverse() {
        let m = cat_map();
        let inv = mat_inverse_unimodular(&m);
        assert_eq!(mat_mul_i64(&m, &inv), identity_mat(2));
    }
}
