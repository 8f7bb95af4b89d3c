//! Generalized box seminorms along finitely generated subgroups of R^ell,
//! their tensor-square (plus) variants, dual functions with trivial weight,
//! the basic-property suite, character-table factor projections, and the
//! finite-abelian concatenation oracle.
//!
//! On finite systems with rational-lattice groups every average collapses to
//! one exact period. Character seminorms vanish exactly or not at all, and
//! the verdict is decided symbolically through the cyclotomic phase-sum test.
//! Irrational generators go through a truncated averaging ladder and only
//! carry Monte-Carlo-style error bars.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::averages::Exactness;
use crate::expsums::PhaseSum;
use crate::sum::Cx;
use crate::systems::{pullback_vec, Block, ExpVec, Observable, System, SystemsError};
use crate::tagged::TaggedReal;

/// Finitely generated subgroup of R^ell given by generator vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupSpec {
    pub ambient: usize,
    pub generators: Vec<Vec<TaggedReal>>,
}

impl SubgroupSpec {
    pub fn new(ambient: usize, generators: Vec<Vec<TaggedReal>>) -> SubgroupSpec {
        debug_assert!(generators.iter().all(|g| g.len() == ambient));
        SubgroupSpec {
            ambient,
            generators,
        }
    }

    /// Single integer generator along transformation `j`.
    pub fn cyclic_int(ambient: usize, j: usize, step: i64) -> SubgroupSpec {
        let mut g = vec![TaggedReal::zero(); ambient];
        g[j] = TaggedReal::from_int(step);
        SubgroupSpec::new(ambient, vec![g])
    }

    /// Integer generators from vectors.
    pub fn from_int_rows(ambient: usize, rows: &[Vec<i64>]) -> SubgroupSpec {
        SubgroupSpec::new(
            ambient,
            rows.iter()
                .map(|r| r.iter().map(|&v| TaggedReal::from_int(v)).collect())
                .collect(),
        )
    }

    /// The full lattice Z^ell.
    pub fn full_lattice(ambient: usize) -> SubgroupSpec {
        let rows: Vec<Vec<i64>> = (0..ambient)
            .map(|i| (0..ambient).map(|j| i64::from(i == j)).collect())
            .collect();
        SubgroupSpec::from_int_rows(ambient, &rows)
    }

    /// Sum of two subgroups: union of generators.
    pub fn sum(&self, other: &SubgroupSpec) -> SubgroupSpec {
        let mut generators = self.generators.clone();
        generators.extend(other.generators.iter().cloned());
        SubgroupSpec::new(self.ambient, generators)
    }

    pub fn rational_rows(&self) -> Option<Vec<Vec<BigRational>>> {
        self.generators
            .iter()
            .map(|g| g.iter().map(|v| v.as_rational().cloned()).collect())
            .collect()
    }

    pub fn is_rational_lattice(&self) -> bool {
        self.rational_rows().is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SemError {
    /// Truncated ladder failed its Cauchy criterion.
    Nonconvergence,
    /// Exact path required (finite system, rational-lattice groups).
    UnsupportedPath,
    /// Period box too large for the exact path.
    TooLarge,
    /// A checked precondition failed.
    PreconditionViolated(String),
    /// A character violates the concatenation containment.
    DecompositionFailure(String),
    Systems(SystemsError),
}

impl fmt::Display for SemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemError::Nonconvergence => write!(f, "truncation ladder failed to converge"),
            SemError::UnsupportedPath => write!(f, "operation needs the exact finite path"),
            SemError::TooLarge => write!(f, "period box exceeds the size cap"),
            SemError::PreconditionViolated(s) => write!(f, "precondition violated: {s}"),
            SemError::DecompositionFailure(s) => write!(f, "decomposition failure: {s}"),
            SemError::Systems(e) => write!(f, "{e}"),
        }
    }
}

impl From<SystemsError> for SemError {
    fn from(e: SystemsError) -> SemError {
        SemError::Systems(e)
    }
}

#[derive(Clone, Debug)]
pub struct SeminormValue {
    pub value: f64,
    pub exactness: Exactness,
}

const BOX_CAP: u128 = 200_000_000;

/// Floor of the lattice combination `sum t_i g_i` as integer exponents.
fn floor_combo(spec: &SubgroupSpec, ts: &[i64]) -> ExpVec {
    let mut v = Vec::with_capacity(spec.ambient);
    for c in 0..spec.ambient {
        let mut acc = TaggedReal::zero();
        for (i, g) in spec.generators.iter().enumerate() {
            acc = acc.add(&g[c].mul(&TaggedReal::from_int(ts[i])));
        }
        let f = match acc.floor_exact() {
            Some(b) => b.to_i64().unwrap_or(0),
            None => libm::floor(acc.to_f64()) as i64,
        };
        v.push(f);
    }
    ExpVec(v)
}

/// Period of each generator coordinate on a finite system.
fn periods(sys: &System, spec: &SubgroupSpec) -> Option<Vec<u64>> {
    let moduli = sys.finite_moduli()?;
    let m_lcm = moduli.iter().fold(1u64, |a, &m| a.lcm(&m));
    let rows = spec.rational_rows()?;
    let mut out = Vec::new();
    for r in rows {
        let mut den = BigInt::one();
        for v in &r {
            den = den.lcm(v.denom());
        }
        let d = den.to_u64()?;
        out.push(d.checked_mul(m_lcm)?);
    }
    Some(out)
}

/// How the group average is evaluated.
enum GroupRange {
    /// One exact period per generator.
    Exact(Vec<u64>),
    /// Symmetric truncation `[-m, m]` per generator.
    Truncated(i64),
}

impl GroupRange {
    fn iter_box(&self, rank: usize) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        let dims: Vec<(i64, i64)> = match self {
            GroupRange::Exact(ps) => ps.iter().map(|&p| (0, p as i64 - 1)).collect(),
            GroupRange::Truncated(m) => (0..rank).map(|_| (-m, *m)).collect(),
        };
        let mut cur: Vec<i64> = dims.iter().map(|d| d.0).collect();
        loop {
            out.push(cur.clone());
            let mut a = rank;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= dims[a].1 {
                    break;
                }
                cur[a] = dims[a].0;
            }
        }
    }
}

/// The 2^s-power of the plain seminorm (or 2^{s+1} of the plus variant),
/// computed by honest recursion over the group boxes.
fn box_power(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
    ranges: &[GroupRange],
    plus: bool,
) -> Result<Cx, SemError> {
    fn rec(
        sys: &System,
        g: &Observable,
        groups: &[SubgroupSpec],
        ranges: &[GroupRange],
        plus: bool,
    ) -> Result<Cx, SemError> {
        let Some(spec) = groups.first() else {
            let i = g.integral();
            return Ok(if plus {
                Cx::new(i.norm_sq(), 0.0)
            } else {
                i
            });
        };
        let rank = spec.generators.len();
        let pts = ranges[0].iter_box(rank);
        let mut acc = Cx::ZERO;
        let pulls: Vec<Observable> = pts
            .iter()
            .map(|m| pullback_vec(sys, &floor_combo(spec, m), g))
            .collect::<Result<_, _>>()?;
        let conjs: Vec<Observable> = pulls.iter().map(Observable::conj).collect();
        for tm in &pulls {
            for tmp_c in &conjs {
                let delta = crate::systems::canonicalize_finite(sys, &tm.mul(tmp_c));
                acc += rec(sys, &delta, &groups[1..], &ranges[1..], plus)?;
            }
        }
        Ok(acc.scale(1.0 / (pts.len() * pts.len()) as f64))
    }
    rec(sys, f, groups, ranges, plus)
}

/// Canonical group order so permutation symmetry is exact.
fn canonical_order(groups: &[SubgroupSpec]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..groups.len()).collect();
    idx.sort_by_key(|&i| format!("{:?}", groups[i]));
    idx
}

fn exact_ranges(sys: &System, groups: &[SubgroupSpec]) -> Option<Vec<GroupRange>> {
    let mut out = Vec::new();
    let mut total: u128 = 1;
    for g in groups {
        let ps = periods(sys, g)?;
        let box_size: u128 = ps.iter().map(|&p| p as u128).product();
        total = total.checked_mul(box_size.checked_mul(box_size)?)?;
        if total > BOX_CAP {
            return None;
        }
        out.push(GroupRange::Exact(ps));
    }
    Some(out)
}

/// Generalized box seminorm `||f||_{G_1,...,G_s}`.
///
/// Finite systems with rational-lattice groups use one exact period; other
/// configurations run a truncation ladder (M, 2M, 4M) and must pass its
/// Cauchy criterion.
pub fn box_seminorm(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
) -> Result<SeminormValue, SemError> {
    seminorm_impl(sys, f, groups, false)
}

/// The plus variant `||f||^+_{G_1,...,G_s} = ||f (x) conj f||^{1/2}`.
pub fn box_seminorm_plus(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
) -> Result<SeminormValue, SemError> {
    seminorm_impl(sys, f, groups, true)
}

fn seminorm_impl(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
    plus: bool,
) -> Result<SeminormValue, SemError> {
    let order = canonical_order(groups);
    let sorted: Vec<SubgroupSpec> = order.iter().map(|&i| groups[i].clone()).collect();
    let s = sorted.len() as u32;
    let root = 1.0 / (1u64 << (s + u32::from(plus))) as f64;
    if let Some(ranges) = exact_ranges(sys, &sorted) {
        let p = box_power(sys, f, &sorted, &ranges, plus)?;
        debug_assert!(p.im.abs() < 1e-9 * (1.0 + p.re.abs()));
        return Ok(SeminormValue {
            value: libm::pow(p.re.max(0.0), root),
            exactness: Exactness::Exact,
        });
    }
    // truncation ladder
    let mut prev: Option<f64> = None;
    for m in [8i64, 16, 32] {
        let ranges: Vec<GroupRange> = sorted.iter().map(|_| GroupRange::Truncated(m)).collect();
        let total: u128 = sorted
            .iter()
            .map(|g| {
                let b = (2 * m as u128 + 1).pow(g.generators.len() as u32);
                b * b
            })
            .product();
        if total > BOX_CAP {
            return Err(SemError::TooLarge);
        }
        let p = box_power(sys, f, &sorted, &ranges, plus)?;
        let v = libm::pow(p.re.max(0.0), root);
        if let Some(pv) = prev {
            if (v - pv).abs() < 0.05 * (1.0 + v.abs()) && m == 32 {
                return Ok(SeminormValue {
                    value: v,
                    exactness: Exactness::MonteCarlo {
                        error_bound: 2.0 * (v - pv).abs() + 1e-3,
                    },
                });
            }
        }
        prev = Some(v);
    }
    Err(SemError::Nonconvergence)
}

// ---------------------------------------------------------------------------
// Character tables
// ---------------------------------------------------------------------------

/// Exact seminorm of a character on a finite shift system.
///
/// One multiplicative derivative turns a character into a unimodular
/// constant, so levels `s >= 2` (and every plus variant with `s >= 1`) are
/// exactly 1; only the level-1 plain seminorm carries information:
/// `|E_{m in G} e(phi(floor m))|`.
pub fn character_seminorm(
    sys: &System,
    freq: &[BigInt],
    groups: &[SubgroupSpec],
    plus: bool,
) -> Result<(f64, bool), SemError> {
    let is_zero_freq = freq.iter().all(Zero::is_zero);
    if groups.is_empty() {
        // s = 0: plain |int chi|, plus the same
        let v = f64::from(is_zero_freq);
        return Ok((v, !is_zero_freq));
    }
    if groups.len() >= 2 || plus {
        return Ok((1.0, false));
    }
    let spec = &groups[0];
    let ps = periods(sys, spec).ok_or(SemError::UnsupportedPath)?;
    let total: u128 = ps.iter().map(|&p| p as u128).product();
    if total > BOX_CAP {
        return Err(SemError::TooLarge);
    }
    // phase of T^{floor(m)} acting on the character, summed over the box
    let mut phases = PhaseSum::new(0);
    let range = GroupRange::Exact(ps);
    for ts in range.iter_box(spec.generators.len()) {
        let exps = floor_combo(spec, &ts);
        let ph = character_phase(sys, &exps, freq)?;
        phases.push(&TaggedReal::Rational(ph), BigRational::one());
    }
    let vanishes = phases.is_zero_exact() == Some(true);
    let v = if vanishes {
        0.0
    } else {
        phases.value().scale(1.0 / total as f64).abs()
    };
    Ok((v * v, vanishes)) // squared: level-1 value is |.|^2 before the root
}

/// Exact rational phase of `T^exps` acting on a finite-system character.
fn character_phase(sys: &System, exps: &ExpVec, freq: &[BigInt]) -> Result<BigRational, SemError> {
    let mut acc = BigRational::zero();
    let mut off = 0usize;
    for b in &sys.blocks {
        match b {
            Block::Finite { modulus, shifts } => {
                let mut add = BigInt::zero();
                for (j, &s) in shifts.iter().enumerate() {
                    add += BigInt::from(exps.0[j]) * BigInt::from(s) * &freq[off];
                }
                acc += BigRational::new(add, BigInt::from(*modulus));
                off += 1;
            }
            _ => return Err(SemError::UnsupportedPath),
        }
    }
    Ok(acc.clone() - acc.floor())
}

/// All characters of a finite system as frequency vectors.
pub fn all_characters(sys: &System) -> Option<Vec<Vec<BigInt>>> {
    let moduli = sys.finite_moduli()?;
    let mut out = vec![Vec::new()];
    for m in moduli {
        let mut next = Vec::new();
        for prefix in out {
            for k in 0..m {
                let mut p = prefix.clone();
                p.push(BigInt::from(k));
                next.push(p);
            }
        }
        out = next;
    }
    Some(out)
}

/// Square root of the level-1 character value.
pub fn character_seminorm_value(
    sys: &System,
    freq: &[BigInt],
    groups: &[SubgroupSpec],
    plus: bool,
) -> Result<SeminormValue, SemError> {
    let (sq, _) = character_seminorm(sys, freq, groups, plus)?;
    Ok(SeminormValue {
        value: libm::sqrt(sq),
        exactness: Exactness::Exact,
    })
}

// ---------------------------------------------------------------------------
// Dual functions and the Gowers-Cauchy-Schwarz check
// ---------------------------------------------------------------------------

/// Level-`s` dual function with trivial weight:
/// `E_{(m,m')} prod_{eps != 0} T^{sum_i floor(m_i^{eps_i}) - floor(m_i)} f_eps`.
///
/// `fs[mask - 1]` holds `f_eps` for the bitmask `mask` of `eps`.
pub fn dual_function(
    sys: &System,
    fs: &[Observable],
    groups: &[SubgroupSpec],
) -> Result<Observable, SemError> {
    let s = groups.len();
    if fs.len() != (1 << s) - 1 {
        return Err(SemError::PreconditionViolated(format!(
            "need {} component functions",
            (1 << s) - 1
        )));
    }
    let ranges = exact_ranges(sys, groups).ok_or(SemError::UnsupportedPath)?;
    // enumerate the full (m, m') box across all groups
    let boxes: Vec<Vec<Vec<i64>>> = ranges
        .iter()
        .zip(groups)
        .map(|(r, g)| r.iter_box(g.generators.len()))
        .collect();
    let mut acc = Observable::zero();
    let mut count = 0u64;
    let mut sel = vec![(0usize, 0usize); s];
    'outer: loop {
        // floors per group for m and m'
        let floors: Vec<(ExpVec, ExpVec)> = (0..s)
            .map(|i| {
                (
                    floor_combo(&groups[i], &boxes[i][sel[i].0]),
                    floor_combo(&groups[i], &boxes[i][sel[i].1]),
                )
            })
            .collect();
        let mut prod: Option<Observable> = None;
        for mask in 1u32..(1 << s) {
            let mut exps = vec![0i64; sys.ell];
            for i in 0..s {
                let pick = if mask & (1 << i) != 0 {
                    &floors[i].1
                } else {
                    &floors[i].0
                };
                for (j, v) in pick.0.iter().enumerate() {
                    exps[j] += v - floors[i].0 .0[j];
                }
            }
            let moved = pullback_vec(sys, &ExpVec(exps), &fs[mask as usize - 1])?;
            prod = Some(match prod {
                None => moved,
                Some(p) => crate::systems::canonicalize_finite(sys, &p.mul(&moved)),
            });
        }
        if let Some(p) = prod {
            for (k, c) in &p.coeffs {
                acc.add_term(k.clone(), *c);
            }
        }
        count += 1;
        // advance selection
        let mut a = s;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            sel[a].1 += 1;
            if sel[a].1 < boxes[a].len() {
                break;
            }
            sel[a].1 = 0;
            sel[a].0 += 1;
            if sel[a].0 < boxes[a].len() {
                break;
            }
            sel[a].0 = 0;
        }
    }
    acc = acc.scale(Cx::new(1.0 / count as f64, 0.0));
    // averaging leaves float dust on exactly-cancelled characters
    acc.coeffs.retain(|_, c| c.abs() > 1e-12);
    Ok(acc)
}

#[derive(Clone, Debug)]
pub struct GcsCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `|int f D((f_eps))| <= (||f||^+)^{1/2^s}`, the Gowers-Cauchy-Schwarz
/// pairing used by the weak structure theorem.
pub fn gcs_check(
    sys: &System,
    f: &Observable,
    fs: &[Observable],
    groups: &[SubgroupSpec],
) -> Result<GcsCheck, SemError> {
    let dual = dual_function(sys, fs, groups)?;
    let lhs = f.mul(&dual).integral().abs();
    let plus = box_seminorm_plus(sys, f, groups)?;
    let rhs = libm::pow(plus.value, 1.0 / (1u64 << groups.len()) as f64);
    Ok(GcsCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct PropertyReport {
    pub violations: Vec<String>,
    pub symmetry_gap: f64,
    pub chain: [f64; 4],
    pub subgroup_pair: (f64, f64),
    pub replacement_pair: (f64, f64),
}

impl PropertyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The basic-property assertions: permutation symmetry (exact), the
/// monotonicity chain, the subgroup inequality on `<2> <= <1>`, and the
/// group-replacement equality when single-transformation ergodic averages
/// agree (G vs 2G on odd modulus).
pub fn property_suite(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
    extra: &SubgroupSpec,
) -> Result<PropertyReport, SemError> {
    let mut rep = PropertyReport::default();
    let tol = 1e-9;

    // symmetry: reversed order must give the identical value
    let plain = box_seminorm(sys, f, groups)?.value;
    let mut rev = groups.to_vec();
    rev.reverse();
    let plain_rev = box_seminorm(sys, f, &rev)?.value;
    rep.symmetry_gap = (plain - plain_rev).abs();
    if plain != plain_rev {
        rep.violations.push("symmetry".into());
    }
    let plus = box_seminorm_plus(sys, f, groups)?.value;
    let plus_rev = box_seminorm_plus(sys, f, &rev)?.value;
    if plus != plus_rev {
        rep.violations.push("symmetry (plus)".into());
    }

    // monotonicity chain with the extra group appended
    let mut bigger = groups.to_vec();
    bigger.push(extra.clone());
    let plain_b = box_seminorm(sys, f, &bigger)?.value;
    let plus_b = box_seminorm_plus(sys, f, &bigger)?.value;
    rep.chain = [plain, plus, plain_b, plus_b];
    if plain > plus + tol || plus > plain_b + tol || plain_b > plus_b + tol {
        rep.violations.push(format!(
            "monotonicity chain {:?}",
            rep.chain
        ));
    }

    // subgroup property on <2> inside <1> along the first transformation
    let g1 = SubgroupSpec::cyclic_int(sys.ell, 0, 1);
    let g2 = SubgroupSpec::cyclic_int(sys.ell, 0, 2);
    let v1 = box_seminorm(sys, f, &[g1.clone()])?.value;
    let v2 = box_seminorm(sys, f, &[g2.clone()])?.value;
    rep.subgroup_pair = (v1, v2);
    if v1 > v2 + tol {
        rep.violations.push(format!("subgroup: {v1} > {v2}"));
    }

    // replacement equality: G vs 2G when the ergodic averages agree
    if ergodic_averages_agree(sys, &g1, &g2)? {
        if (v1 - v2).abs() > tol {
            rep.violations
                .push(format!("replacement equality: {v1} vs {v2}"));
        }
        rep.replacement_pair = (v1, v2);
    }

    Ok(rep)
}

/// Whether `E_{m in G} T^floor(m) f = E_{m in G'} T^floor(m) f` for all `f`,
/// decided on a finite system by comparing the two averaging projections on
/// every character.
pub fn ergodic_averages_agree(
    sys: &System,
    g: &SubgroupSpec,
    gp: &SubgroupSpec,
) -> Result<bool, SemError> {
    let chars = all_characters(sys).ok_or(SemError::UnsupportedPath)?;
    for k in chars {
        let a = character_group_average(sys, &k, g)?;
        let b = character_group_average(sys, &k, gp)?;
        if (a - b).abs() > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn character_group_average(
    sys: &System,
    freq: &[BigInt],
    spec: &SubgroupSpec,
) -> Result<Cx, SemError> {
    let ps = periods(sys, spec).ok_or(SemError::UnsupportedPath)?;
    let range = GroupRange::Exact(ps.clone());
    let mut phases = PhaseSum::new(0);
    for ts in range.iter_box(spec.generators.len()) {
        let exps = floor_combo(spec, &ts);
        phases.push(
            &TaggedReal::Rational(character_phase(sys, &exps, freq)?),
            BigRational::one(),
        );
    }
    if phases.is_zero_exact() == Some(true) {
        return Ok(Cx::ZERO);
    }
    let total: u128 = ps.iter().map(|&p| p as u128).product();
    Ok(phases.value().scale(1.0 / total as f64))
}

// ---------------------------------------------------------------------------
// Factor projection and concatenation
// ---------------------------------------------------------------------------

/// Projection of `f` onto the span of characters whose box seminorm along
/// `groups` does not vanish; the complement is exactly seminorm-null.
///
/// The factor here is the classical integer-lattice one (plain seminorms):
/// plus seminorms of characters never vanish on shift systems, so the plain
/// table is what carries the factor structure.
pub fn factor_project(
    sys: &System,
    f: &Observable,
    groups: &[SubgroupSpec],
) -> Result<Observable, SemError> {
    let canon = crate::systems::canonicalize_finite(sys, f);
    let mut out = Observable::zero();
    for (k, c) in &canon.coeffs {
        let (_, vanishes) = character_seminorm(sys, k, groups, false)?;
        if !vanishes {
            out.add_term(k.clone(), *c);
        }
    }
    out.prune();
    Ok(out)
}

/// Relative concatenation oracle on a finite abelian system: given
/// `E(f | Z_{G...,(H+H')}) = 0`, split `f = g1 + g2` with `g1` null along
/// `G_list + {H}` and `g2` null along `G_list + {H'}`, character by
/// character with ties toward `g1`.
pub fn concat_decompose(
    sys: &System,
    f: &Observable,
    g_list: &[SubgroupSpec],
    h: &SubgroupSpec,
    hp: &SubgroupSpec,
) -> Result<(Observable, Observable), SemError> {
    let mut spec_sum = g_list.to_vec();
    spec_sum.push(h.sum(hp));
    let proj = factor_project(sys, f, &spec_sum)?;
    if !proj.coeffs.is_empty() {
        return Err(SemError::PreconditionViolated(
            "f must be orthogonal to the concatenated factor".into(),
        ));
    }
    let mut spec_h = g_list.to_vec();
    spec_h.push(h.clone());
    let mut spec_hp = g_list.to_vec();
    spec_hp.push(hp.clone());
    let canon = crate::systems::canonicalize_finite(sys, f);
    let mut g1 = Observable::zero();
    let mut g2 = Observable::zero();
    for (k, c) in &canon.coeffs {
        let (_, null_h) = character_seminorm(sys, k, &spec_h, false)?;
        if null_h {
            g1.add_term(k.clone(), *c);
            continue;
        }
        let (_, null_hp) = character_seminorm(sys, k, &spec_hp, false)?;
        if null_hp {
            g2.add_term(k.clone(), *c);
            continue;
        }
        return Err(SemError::DecompositionFailure(format!(
            "character {k:?} is null for the sum but for neither part"
        )));
    }
    g1.prune();
    g2.prune();
    Ok((g1, g2))
}

// ---------------------------------------------------------------------------
// Seminorm comparison report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// `(lhs, rhs)` per test function: plus-seminorm along `{Z^ell, <e_i,e_j>}`
    /// against the plain seminorm along `<beta_1 e_i - beta_2 e_j>`.
    pub scatter: Vec<(f64, f64)>,
    pub holds: bool,
}

/// Instance check of the seminorm-comparison implication: whenever the
/// hypothesis seminorm is below `delta`, the difference-direction seminorm
/// stays below `epsilon`.
///
/// The growth condition `beta_2 a_1 - beta_1 a_2 << log` is verified
/// symbolically before any numerics.
#[allow(clippy::too_many_arguments)]
pub fn seminorm_comparison_check(
    sys: &System,
    a1: &crate::hardy::HardyExpr,
    a2: &crate::hardy::HardyExpr,
    beta1: &TaggedReal,
    beta2: &TaggedReal,
    i: usize,
    j: usize,
    test_fs: &[Observable],
    delta: f64,
    epsilon: f64,
) -> Result<ComparisonReport, SemError> {
    let diff = a1.scale(beta2).sub(&a2.scale(beta1));
    if diff.terms().iter().any(|(_, atom)| atom.above_log()) {
        return Err(SemError::PreconditionViolated(
            "beta_2 a_1 - beta_1 a_2 must stay at or below log".into(),
        ));
    }
    let hyp_groups = vec![
        SubgroupSpec::full_lattice(sys.ell),
        SubgroupSpec::from_int_rows(sys.ell, &{
            let mut r1 = vec![0i64; sys.ell];
            r1[i] = 1;
            let mut r2 = vec![0i64; sys.ell];
            r2[j] = 1;
            vec![r1, r2]
        }),
    ];
    let mut dir = vec![TaggedReal::zero(); sys.ell];
    dir[i] = beta1.clone();
    dir[j] = beta2.neg();
    let dir_group = SubgroupSpec::new(sys.ell, vec![dir]);
    let mut scatter = Vec::new();
    let mut holds = true;
    for f in test_fs {
        let lhs = box_seminorm_plus(sys, f, &hyp_groups)?.value;
        let rhs = box_seminorm(sys, f, &[dir_group.clone()])?.value;
        if lhs <= delta && rhs > epsilon {
            holds = false;
        }
        scatter.push((lhs, rhs));
    }
    Ok(ComparisonReport { scatter, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::table_to_observable;

    fn chi(sys: &System, k: i64) -> Observable {
        let _ = sys;
        Observable::character_i64(&[k])
    }

    #[test]
    fn constant_seminorm_is_its_modulus() {
        let sys = System::finite_cyclic(5, vec![1]).unwrap();
        let c = Observable::constant(Cx::new(-2.5, 1.0), 1);
        let g = SubgroupSpec::cyclic_int(1, 0, 1);
        let v = box_seminorm(&sys, &c, &[g.clone()]).unwrap();
        let want = libm::sqrt(2.5 * 2.5 + 1.0);
        assert!((v.value - want).abs() < 1e-12);
        let vp = box_seminorm_plus(&sys, &c, &[g]).unwrap();
        assert!((vp.value - want).abs() < 1e-12);
    }

    #[test]
    fn character_level_one_vanishing() {
        // FiniteCyclic(5, shift 1), f = chi_1, G = <1>: |E e(m/5)|^2 = 0
        let sys = System::finite_cyclic(5, vec![1]).unwrap();
        let g = SubgroupSpec::cyclic_int(1, 0, 1);
        let v = box_seminorm(&sys, &chi(&sys, 1), &[g.clone()]).unwrap();
        assert!(v.value < 1e-12);
        let (sq, vanishes) = character_seminorm(&sys, &[BigInt::from(1)], &[g], false).unwrap();
        assert!(vanishes);
        assert_eq!(sq, 0.0);
    }

    #[test]
    fn character_fast_path_matches_recursion() {
        let sys = System::finite_cyclic(6, vec![1]).unwrap();
        for k in 0..6i64 {
            for step in 1..=3i64 {
                let g = SubgroupSpec::cyclic_int(1, 0, step);
                let slow = box_seminorm(&sys, &chi(&sys, k), &[g.clone()]).unwrap();
                let fast = character_seminorm_value(&sys, &[BigInt::from(k)], &[g], false).unwrap();
                assert!(
                    (slow.value - fast.value).abs() < 1e-10,
                    "k={k} step={step}: {} vs {}",
                    slow.value,
                    fast.value
                );
            }
        }
    }

    #[test]
    fn diagonality_oracle() {
        // ||sum c_k chi_k||^{2^s} = sum |c_k|^{2^s} ||chi_k||^{2^s} for
        // single-generator integer groups
        let sys = System::finite_cyclic(4, vec![1]).unwrap();
        let g = SubgroupSpec::cyclic_int(1, 0, 2);
        let mut f = chi(&sys, 1).scale(Cx::new(0.5, 0.0));
        f = f.add(&chi(&sys, 2).scale(Cx::new(0.0, -1.5)));
        let v = box_seminorm(&sys, &f, &[g.clone()]).unwrap();
        let v1 = box_seminorm(&sys, &chi(&sys, 1), &[g.clone()]).unwrap();
        let v2 = box_seminorm(&sys, &chi(&sys, 2), &[g]).unwrap();
        let want = 0.25 * v1.value * v1.value + 2.25 * v2.value * v2.value;
        assert!(
            (v.value * v.value - want).abs() < 1e-10,
            "{} vs {}",
            v.value * v.value,
            want
        );
    }

    #[test]
    fn plus_equals_tensor_square_root() {
        // ||f||+ = ||f (x) conj f||^{1/2} via the explicit tensor system
        let sys = System::finite_cyclic(4, vec![1]).unwrap();
        let mut f = chi(&sys, 1).scale(Cx::new(0.7, 0.1));
        f.add_term(vec![BigInt::from(2)], Cx::new(-0.3, 0.4));
        let g = SubgroupSpec::cyclic_int(1, 0, 1);
        let plus = box_seminorm_plus(&sys, &f, &[g.clone()]).unwrap();
        let tensor_sys = sys.tensor(&sys).unwrap();
        let tensor_f = f.tensor(&f.conj());
        let g2 = SubgroupSpec::cyclic_int(1, 0, 1);
        let t = box_seminorm(&tensor_sys, &tensor_f, &[g2]).unwrap();
        assert!(
            (plus.value - libm::sqrt(t.value)).abs() < 1e-9,
            "{} vs sqrt({})",
            plus.value,
            t.value
        );
    }

    #[test]
    fn dual_function_examples() {
        let m = 5u64;
        let sys = System::finite_cyclic(m, vec![1]).unwrap();
        let g = SubgroupSpec::cyclic_int(1, 0, 1);
        // s=1, f_1 = 1 -> constant 1
        let one = Observable::constant(Cx::ONE, 1);
        let d = dual_function(&sys, &[one.clone()], &[g.clone()]).unwrap();
        assert_eq!(d, one);
        // s=1, f_1 = chi_k (k != 0) -> 0
        let d = dual_function(&sys, &[chi(&sys, 2)], &[g]).unwrap();
        assert!(d.coeffs.is_empty(), "{d:?}");
    }

    #[test]
    fn gcs_bound_on_characters_and_tables() {
        let sys = System::finite_cyclic(5, vec![1]).unwrap();
        let g = SubgroupSpec::cyclic_int(1, 0, 1);
        // mean-zero character: lhs = 0 <= rhs
        let out = gcs_check(&sys, &chi(&sys, 1), &[chi(&sys, 1)], &[g.clone()]).unwrap();
        assert!(out.holds);
        assert!(out.lhs < 1e-12);
        // constant: lhs <= 1 = rhs
        let one = Observable::constant(Cx::ONE, 1);
        let out = gcs_check(&sys, &one, &[one.clone()], &[g]).unwrap();
        assert!(out.holds);
    }

    #[test]
    fn property_suite_on_random_tables() {
        let sys = System::finite_cyclic(9, vec![1]).unwrap();
        let mut state = 7u64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 500.0 - 1.0
        };
        for trial in 0..3 {
            let vals: Vec<Cx> = (0..9).map(|_| Cx::new(rnd(), rnd())).collect();
            let f = table_to_observable(&sys, &vals).unwrap();
            let groups = vec![SubgroupSpec::cyclic_int(1, 0, 1)];
            let extra = SubgroupSpec::cyclic_int(1, 0, 3);
            let rep = property_suite(&sys, &f, &groups, &extra).unwrap();
            assert!(rep.ok(), "trial {trial}: {:?}", rep.violations);
        }
    }

    #[test]
    fn replacement_equality_на_odd_modulus() {
        // <1> vs <2> on M = 9: T and T^2 generate the same averages
        let sys = System::finite_cyclic(9, vec![1]).unwrap();
        let g1 = SubgroupSpec::cyclic_int(1, 0, 1);
        let g2 = SubgroupSpec::cyclic_int(1, 0, 2);
        assert!(ergodic_averages_agree(&sys, &g1, &g2).unwrap());
        // even modulus: <2> misses odd residues
        let sys2 = System::finite_cyclic(8, vec![1]).unwrap();
        assert!(!ergodic_averages_agree(&sys2, &g1, &g2).unwrap());
    }

    #[test]
    fn factor_projection_characters() {
        let sys = System::finite_cyclic(5, vec![1]).unwrap();
        let g = vec![SubgroupSpec::cyclic_int(1, 0, 1)];
        // chi_0 survives
        let one = Observable::constant(Cx::ONE, 1);
        assert_eq!(factor_project(&sys, &one, &g).unwrap(), one);
        // chi_1 is null: projection 0
        let p = factor_project(&sys, &chi(&sys, 1), &g).unwrap();
        assert!(p.coeffs.is_empty());
        // mixed: chi_0 + chi_1 -> chi_0
        let mixed = one.add(&chi(&sys, 1));
        assert_eq!(factor_project(&sys, &mixed, &g).unwrap(), one);
    }

    #[test]
    fn concat_split_on_z8_squared() {
        // ell = 2, M = 8 per coordinate, H = <(1,0)>, H' = <(0,1)>
        let sys = System::finite_cyclic(8, vec![1, 0])
            .unwrap()
            .tensor(&System::finite_cyclic(8, vec![0, 1]).unwrap())
            .unwrap();
        let h = SubgroupSpec::from_int_rows(2, &[vec![1, 0]]);
        let hp = SubgroupSpec::from_int_rows(2, &[vec![0, 1]]);
        // f with characters null for H + H' = Z^2: both coordinates nonzero
        let mut f = Observable::character_i64(&[1, 3]).scale(Cx::new(1.0, 0.0));
        f.add_term(vec![BigInt::from(0), BigInt::from(5)], Cx::new(0.5, -0.5));
        f.add_term(vec![BigInt::from(2), BigInt::from(0)], Cx::new(0.0, 2.0));
        let (g1, g2) = concat_decompose(&sys, &f, &[], &h, &hp).unwrap();
        // both parts null for their spec
        for (k, _) in &g1.coeffs {
            let (_, null) = character_seminorm(&sys, k, &[h.clone()], false).unwrap();
            assert!(null);
        }
        for (k, _) in &g2.coeffs {
            let (_, null) = character_seminorm(&sys, k, &[hp.clone()], false).unwrap();
            assert!(null);
        }
        assert_eq!(g1.add(&g2), crate::systems::canonicalize_finite(&sys, &f));
        // f = 0 -> (0, 0)
        let (z1, z2) = concat_decompose(&sys, &Observable::zero(), &[], &h, &hp).unwrap();
        assert!(z1.coeffs.is_empty() && z2.coeffs.is_empty());
    }

    #[test]
    fn concat_precondition_enforced() {
        let sys = System::finite_cyclic(8, vec![1, 0])
            .unwrap()
            .tensor(&System::finite_cyclic(8, vec![0, 1]).unwrap())
            .unwrap();
        let h = SubgroupSpec::from_int_rows(2, &[vec![1, 0]]);
        let hp = SubgroupSpec::from_int_rows(2, &[vec![0, 1]]);
        // constant is in every factor: precondition fails
        let one = Observable::constant(Cx::ONE, 2);
        assert!(matches!(
            concat_decompose(&sys, &one, &[], &h, &hp),
            Err(SemError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn comparison_check_rational_direction() {
        // beta1/beta2 = 1/1 on a two-shift finite system
        let sys = System::finite_cyclic(7, vec![1, 2]).unwrap();
        let fs: Vec<Observable> = (0..7).map(|k| chi(&sys, k)).collect();
        let rep = seminorm_comparison_check(
            &sys,
            &crate::hardy::HardyExpr::x(),
            &crate::hardy::HardyExpr::x(),
            &TaggedReal::one(),
            &TaggedReal::one(),
            0,
            1,
            &fs,
            1e-9,
            1e-6,
        )
        .unwrap();
        assert!(rep.holds, "{:?}", rep.scatter);
    }

    #[test]
    fn truncated_ladder_on_torus() {
        // irrational generator on a rotation system: inequalities only
        let sys = System::torus_rotation(1, vec![vec![TaggedReal::sqrt(2)]]).unwrap();
        let f = Observable::character_i64(&[1]);
        let g = SubgroupSpec::new(1, vec![vec![TaggedReal::sqrt(2)]]);
        let v = box_seminorm(&sys, &f, &[g]).unwrap();
        match v.exactness {
            Exactness::MonteCarlo { error_bound } => {
                assert!(v.value <= 1.0 + error_bound);
            }
            Exactness::Exact => panic!("expected the truncated path"),
        }
    }
}
