//! Symbolic calculus for Hardy expressions of polynomial growth: finite sums
//! `c * x^p * log2(x)^k` plus a constant. Growth comparison, classification
//! against rational polynomials, equidistribution and independence predicates,
//! ordered families, and certified floors of iterates.
//!
//! Logarithms are carried in base 2 internally; the text grammar accepts
//! `log(x)` and folds the `ln 2` factors into coefficients.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::cmp::Ordering;
use core::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::dd::Dd;
use crate::mp::{self, MpVal};
use crate::tagged::{Rationality, TaggedReal, Undecidable};

/// `x^power * log2(x)^log_exp`; `(power, log_exp) != (0, 0)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrowthAtom {
    pub power: BigRational,
    pub log_exp: u32,
}

impl GrowthAtom {
    pub fn new(power: BigRational, log_exp: u32) -> GrowthAtom {
        debug_assert!(!power.is_negative());
        debug_assert!(!(power.is_zero() && log_exp == 0));
        GrowthAtom { power, log_exp }
    }

    pub fn monomial(p_num: i64, p_den: i64) -> GrowthAtom {
        GrowthAtom::new(
            BigRational::new(BigInt::from(p_num), BigInt::from(p_den)),
            0,
        )
    }

    pub fn log(k: u32) -> GrowthAtom {
        GrowthAtom::new(BigRational::zero(), k)
    }

    /// Faster than `log x` by a positive margin: `x^eps` beats every log power.
    pub fn above_log(&self) -> bool {
        self.power.is_positive() || self.log_exp >= 2
    }

    /// Integer power at least one, no log factor.
    pub fn is_integer_monomial(&self) -> bool {
        self.log_exp == 0 && self.power.is_integer() && self.power >= BigRational::one()
    }
}

impl PartialOrd for GrowthAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GrowthAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.power
            .cmp(&other.power)
            .then(self.log_exp.cmp(&other.log_exp))
    }
}

/// A finite sum of growth atoms with nonzero coefficients plus a constant,
/// terms sorted strictly descending by growth.
#[derive(Clone, Debug, PartialEq)]
pub struct HardyExpr {
    terms: Vec<(TaggedReal, GrowthAtom)>,
    constant: TaggedReal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HardyError {
    /// Evaluation point at or below 1.
    Domain,
    /// The certified interval around the value contains an integer.
    AmbiguousFloor,
    /// A flagged float hides the rationality the operation needs.
    Undecidable,
    /// Two family members share a growth class.
    NotOrderable,
    /// A member fits none of the ordered-family blocks.
    BlockViolation,
    /// Expression outside the extended span of the family.
    NotInSpan,
}

impl fmt::Display for HardyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardyError::Domain => write!(f, "evaluation point must exceed 1"),
            HardyError::AmbiguousFloor => write!(f, "certified interval contains an integer"),
            HardyError::Undecidable => write!(f, "rationality undecidable for untagged float"),
            HardyError::NotOrderable => write!(f, "members share a growth class"),
            HardyError::BlockViolation => write!(f, "member fits no ordered-family block"),
            HardyError::NotInSpan => write!(f, "expression not in the family's extended span"),
        }
    }
}

impl From<Undecidable> for HardyError {
    fn from(_: Undecidable) -> HardyError {
        HardyError::Undecidable
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GrowthCmp {
    StrictlySlower,
    /// Same growth class; carries the limit ratio of leading coefficients.
    Comparable(TaggedReal),
    StrictlyFaster,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassificationResult {
    /// Converges to a constant after subtracting this rational polynomial
    /// (coefficient per power, constant term excluded).
    AlmostRationalPolynomial(Vec<(BigRational, BigRational)>),
    LogFarFromQ,
    LogFarFromR,
    SubLogarithmic,
    ConvergesToConstant(TaggedReal),
}

/// Integer value of `a(n)` plus bookkeeping for ambiguous floors.
#[derive(Clone, Debug)]
pub enum NValue {
    Exact(TaggedReal),
    Approx { value: Dd, abs_err: f64 },
}

impl HardyExpr {
    pub fn zero() -> HardyExpr {
        HardyExpr {
            terms: Vec::new(),
            constant: TaggedReal::zero(),
        }
    }

    pub fn constant(c: TaggedReal) -> HardyExpr {
        HardyExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn from_parts(terms: Vec<(TaggedReal, GrowthAtom)>, constant: TaggedReal) -> HardyExpr {
        let mut merged: Vec<(TaggedReal, GrowthAtom)> = Vec::new();
        for (c, a) in terms {
            if let Some(slot) = merged.iter_mut().find(|(_, b)| *b == a) {
                slot.0 = slot.0.add(&c);
            } else {
                merged.push((c, a));
            }
        }
        merged.retain(|(c, _)| !c.is_zero());
        merged.sort_by(|x, y| y.1.cmp(&x.1));
        HardyExpr {
            terms: merged,
            constant,
        }
    }

    pub fn term(coeff: TaggedReal, atom: GrowthAtom) -> HardyExpr {
        HardyExpr::from_parts(vec![(coeff, atom)], TaggedReal::zero())
    }

    /// The identity sequence `x`.
    pub fn x() -> HardyExpr {
        HardyExpr::term(TaggedReal::one(), GrowthAtom::monomial(1, 1))
    }

    /// `c * x^(p_num/p_den)`.
    pub fn monomial(coeff: TaggedReal, p_num: i64, p_den: i64) -> HardyExpr {
        HardyExpr::term(coeff, GrowthAtom::monomial(p_num, p_den))
    }

    /// `log2(x)`.
    pub fn log2_x() -> HardyExpr {
        HardyExpr::term(TaggedReal::one(), GrowthAtom::log(1))
    }

    /// Natural `log(x)^k`, folded onto the base-2 atom.
    pub fn ln_x_pow(k: u32) -> HardyExpr {
        HardyExpr::term(
            TaggedReal::float_dd(Dd::LN2.powi(k), true),
            GrowthAtom::log(k),
        )
    }

    pub fn terms(&self) -> &[(TaggedReal, GrowthAtom)] {
        &self.terms
    }

    pub fn constant_part(&self) -> &TaggedReal {
        &self.constant
    }

    pub fn leading(&self) -> Option<&(TaggedReal, GrowthAtom)> {
        self.terms.first()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &HardyExpr) -> HardyExpr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        HardyExpr::from_parts(terms, self.constant.add(&other.constant))
    }

    pub fn sub(&self, other: &HardyExpr) -> HardyExpr {
        self.add(&other.scale(&TaggedReal::from_int(-1)))
    }

    pub fn scale(&self, c: &TaggedReal) -> HardyExpr {
        if c.is_zero() {
            return HardyExpr::zero();
        }
        HardyExpr::from_parts(
            self.terms
                .iter()
                .map(|(k, a)| (k.mul(c), a.clone()))
                .collect(),
            self.constant.mul(c),
        )
    }

    pub fn add_constant(&self, c: &TaggedReal) -> HardyExpr {
        HardyExpr {
            terms: self.terms.clone(),
            constant: self.constant.add(c),
        }
    }

    /// Evaluate at `x > 1` in double-double arithmetic.
    pub fn eval(&self, x: Dd) -> Result<Dd, HardyError> {
        if x.to_f64() <= 1.0 {
            return Err(HardyError::Domain);
        }
        let lnx = x.ln();
        let log2x = lnx / Dd::LN2;
        let mut acc = self.constant.to_dd();
        for (c, atom) in &self.terms {
            let mut t = c.to_dd();
            if !atom.power.is_zero() {
                let p = crate::tagged::TaggedReal::Rational(atom.power.clone()).to_dd();
                t = t * (p * lnx).exp();
            }
            if atom.log_exp > 0 {
                t = t * log2x.powi(atom.log_exp);
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Evaluate at integer `n >= 1`, exactly when the representation allows it.
    pub fn eval_n(&self, n: u64) -> Result<NValue, HardyError> {
        if n == 0 {
            return Err(HardyError::Domain);
        }
        if let Some(exact) = self.eval_n_exact(n) {
            return Ok(NValue::Exact(exact));
        }
        let x = Dd::from_f64(n as f64); // exact, n < 2^53
        let value = self.eval(if n == 1 { Dd::from_f64(1.0 + 1e-300) } else { x });
        let value = match value {
            Ok(v) => v,
            Err(_) if n == 1 => self.constant.to_dd(),
            Err(e) => return Err(e),
        };
        let mut err = 0.0f64;
        for (c, atom) in &self.terms {
            let mag = libm::fabs(c.to_f64())
                * libm::pow(n as f64, atom.power.to_f64().unwrap_or(0.0))
                * libm::pow(libm::log2(n.max(2) as f64), atom.log_exp as f64);
            err += mag * 3e-27 + 1e-300; // ~2^-88 per term
        }
        err += libm::fabs(value.to_f64()) * 1e-30;
        Ok(NValue::Approx {
            value,
            abs_err: err,
        })
    }

    fn eval_n_exact(&self, n: u64) -> Option<TaggedReal> {
        let mut acc = self.constant.clone();
        if matches!(acc, TaggedReal::Float { .. }) && !self.terms.is_empty() {
            // a float constant still sums exactly only against nothing
        }
        for (c, atom) in &self.terms {
            if matches!(c, TaggedReal::Float { .. }) {
                return None;
            }
            let logpart: TaggedReal = if atom.log_exp == 0 {
                TaggedReal::one()
            } else if n == 1 {
                TaggedReal::zero()
            } else if n.is_power_of_two() {
                let j = BigInt::from(n.trailing_zeros());
                TaggedReal::Rational(BigRational::from(j).pow(atom.log_exp as i32))
            } else {
                return None;
            };
            if logpart.is_zero() {
                continue;
            }
            let powpart = exact_int_pow(n, &atom.power)?;
            let term = c.mul(&powpart).mul(&logpart);
            acc = acc.add(&term);
            if matches!(acc, TaggedReal::Float { .. }) {
                return None; // mixed quadratic fields
            }
        }
        match acc {
            TaggedReal::Float { .. } => None,
            v => Some(v),
        }
    }

    /// High-precision fallback evaluation at integer `n`.
    fn eval_n_mp(&self, n: u64) -> Option<MpVal> {
        let mut acc = MpVal::exact(BigInt::zero());
        acc = acc.add(&tagged_to_mp(&self.constant)?);
        let ln2 = MpVal {
            mant: mp::ln2(),
            err_ulps: 2,
        };
        for (c, atom) in &self.terms {
            let mut term = tagged_to_mp(c)?;
            if !atom.power.is_zero() {
                let pu = atom.power.numer().to_u64()?;
                let pv = atom.power.denom().to_u64()?;
                let pw = MpVal {
                    mant: mp::pow_frac_u64(n, pu, pv),
                    err_ulps: 1,
                };
                term = term.mul(&pw, 45);
            }
            if atom.log_exp > 0 {
                let lnn = MpVal {
                    mant: mp::ln_u64(n),
                    err_ulps: 4,
                };
                let log2n = MpVal {
                    mant: mp::from_ratio(&(&lnn.mant << mp::SCALE), &ln2.mant),
                    err_ulps: 16,
                };
                for _ in 0..atom.log_exp {
                    term = term.mul(&log2n, 6);
                }
            }
            acc = acc.add(&term);
        }
        Some(acc)
    }

    /// `floor(a(n))`, exact where the representation is exact, else certified.
    pub fn floor_iter(&self, n: u64) -> Result<BigInt, HardyError> {
        match self.eval_n(n)? {
            NValue::Exact(v) => v.floor_exact().ok_or(HardyError::AmbiguousFloor),
            NValue::Approx { value, abs_err } => {
                let fl = value.floor();
                let frac = (value - fl).to_f64();
                if frac > 4.0 * abs_err && 1.0 - frac > 4.0 * abs_err {
                    return Ok(dd_int_to_big(fl));
                }
                // escalate to 256-bit fixed point
                let v = self.eval_n_mp(n).ok_or(HardyError::AmbiguousFloor)?;
                v.floor_checked().ok_or(HardyError::AmbiguousFloor)
            }
        }
    }

    /// Growth comparison by leading atoms.
    pub fn growth_compare(&self, other: &HardyExpr) -> GrowthCmp {
        match (self.leading(), other.leading()) {
            (None, None) => GrowthCmp::Comparable(self.constant.div(&other.constant)),
            (None, Some(_)) => GrowthCmp::StrictlySlower,
            (Some(_), None) => GrowthCmp::StrictlyFaster,
            (Some((c1, a1)), Some((c2, a2))) => match a1.cmp(a2) {
                Ordering::Less => GrowthCmp::StrictlySlower,
                Ordering::Greater => GrowthCmp::StrictlyFaster,
                Ordering::Equal => GrowthCmp::Comparable(c1.div(c2)),
            },
        }
    }

    /// Distance from rational polynomials, on the scale of `log`.
    pub fn classify(&self) -> Result<ClassificationResult, HardyError> {
        if self.terms.is_empty() {
            return Ok(ClassificationResult::ConvergesToConstant(
                self.constant.clone(),
            ));
        }
        let mut poly: Vec<(BigRational, BigRational)> = Vec::new();
        let mut unknown_monomial = false;
        let mut residual_leading: Option<&GrowthAtom> = None;
        for (c, atom) in &self.terms {
            if atom.is_integer_monomial() {
                match c.rationality() {
                    Rationality::Rational => {
                        poly.push((atom.power.clone(), c.as_rational().unwrap().clone()));
                        continue;
                    }
                    Rationality::Unknown => {
                        unknown_monomial = true;
                        continue;
                    }
                    Rationality::Irrational => {}
                }
            }
            if residual_leading.is_none() {
                residual_leading = Some(atom);
            }
        }
        match residual_leading {
            Some(atom) if atom.above_log() => Ok(ClassificationResult::LogFarFromQ),
            _ if unknown_monomial => Err(HardyError::Undecidable),
            Some(_) => Ok(ClassificationResult::SubLogarithmic),
            None => Ok(ClassificationResult::AlmostRationalPolynomial(poly)),
        }
    }

    /// Whether the expression is a real polynomial or stays logarithmically
    /// away from all of them (the standing assumption of the exponential-sum
    /// lemmas).
    pub fn real_poly_or_log_far(&self) -> bool {
        let residual = self
            .terms
            .iter()
            .find(|(_, a)| !a.is_integer_monomial());
        match residual {
            None => true, // a real polynomial
            Some((_, atom)) => atom.above_log(),
        }
    }

    /// Boshernitzan's criterion specialized to the symbolic class.
    pub fn is_equidistributed(&self) -> Result<bool, HardyError> {
        Ok(matches!(self.classify()?, ClassificationResult::LogFarFromQ))
    }

    fn above_log_terms(&self) -> Vec<&(TaggedReal, GrowthAtom)> {
        self.terms.iter().filter(|(_, a)| a.above_log()).collect()
    }

    /// No real combination `c1 a1 + c2 a2` with `(c1, c2) != 0` grows slower
    /// than every atom above `log`.
    pub fn pairwise_independent(&self, other: &HardyExpr) -> Result<bool, HardyError> {
        let s1 = self.above_log_terms();
        let s2 = other.above_log_terms();
        if s1.is_empty() || s2.is_empty() {
            return Ok(false);
        }
        if s1.len() != s2.len() {
            return Ok(true);
        }
        // identical atom sets? (both sorted descending)
        if s1
            .iter()
            .zip(s2.iter())
            .any(|((_, a1), (_, a2))| a1 != a2)
        {
            return Ok(true);
        }
        // proportional coefficients cancel everything above log
        let ratio = s1[0].0.div(&s2[0].0);
        for ((c1, _), (c2, _)) in s1.iter().zip(s2.iter()).skip(1) {
            let diff = c1.sub(&ratio.mul(c2));
            if matches!(diff, TaggedReal::Float { .. }) {
                return Err(HardyError::Undecidable);
            }
            if !diff.is_zero() {
                return Ok(true);
            }
        }
        if matches!(ratio, TaggedReal::Float { .. }) {
            return Err(HardyError::Undecidable);
        }
        Ok(false)
    }

    /// Canonical text form; see the grammar in [`parse`].
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return self.constant.to_text();
        }
        let mut out = String::new();
        for (i, (c, atom)) in self.terms.iter().enumerate() {
            let neg = matches!(c.cmp_rational(&BigRational::zero()), Some(Ordering::Less));
            let (sign, cc) = if neg {
                ("-", c.neg())
            } else {
                ("+", c.clone())
            };
            if i > 0 || neg {
                out.push_str(if i > 0 { " " } else { "" });
                if i > 0 {
                    out.push_str(sign);
                    out.push(' ');
                } else {
                    out.push_str(sign);
                }
            }
            let coeff_txt = cc.to_text();
            let mut parts: Vec<String> = Vec::new();
            if coeff_txt != "1" {
                parts.push(coeff_txt);
            }
            if !atom.power.is_zero() {
                let p = &atom.power;
                if p.is_integer() {
                    if p.is_one() {
                        parts.push("x".into());
                    } else {
                        parts.push(format!("x^{}", p.numer()));
                    }
                } else {
                    parts.push(format!("x^{{{}/{}}}", p.numer(), p.denom()));
                }
            }
            if atom.log_exp == 1 {
                parts.push("log2(x)".into());
            } else if atom.log_exp > 1 {
                parts.push(format!("log2(x)^{}", atom.log_exp));
            }
            if parts.is_empty() {
                parts.push("1".into());
            }
            out.push_str(&parts.join("*"));
        }
        if !self.constant.is_zero() {
            let neg = matches!(
                self.constant.cmp_rational(&BigRational::zero()),
                Some(Ordering::Less)
            );
            if neg {
                out.push_str(" - ");
                out.push_str(&self.constant.neg().to_text());
            } else {
                out.push_str(" + ");
                out.push_str(&self.constant.to_text());
            }
        }
        out
    }
}

fn dd_int_to_big(v: Dd) -> BigInt {
    BigInt::from(v.hi as i128) + BigInt::from(v.lo as i128)
}

fn tagged_to_mp(t: &TaggedReal) -> Option<MpVal> {
    match t {
        TaggedReal::Rational(r) => Some(MpVal {
            mant: mp::from_rational(r),
            err_ulps: 1,
        }),
        TaggedReal::Quad { a, b, d } => {
            let av = mp::from_rational(a);
            let sq = MpVal {
                mant: mp::sqrt_u64(*d),
                err_ulps: 1,
            };
            let bv = MpVal {
                mant: mp::from_rational(b),
                err_ulps: 1,
            };
            Some(MpVal::exact(av).add(&bv.mul(&sq, 8)))
        }
        TaggedReal::Float { value, .. } => {
            // hi and lo are exact dyadic rationals
            let hi = BigRational::from_float(value.hi)?;
            let lo = BigRational::from_float(value.lo)?;
            Some(MpVal {
                mant: mp::from_rational(&(hi + lo)),
                err_ulps: 1,
            })
        }
    }
}

/// `n^p` as an exact scalar: rational when the root resolves, a quadratic
/// irrational `s sqrt(f)` for half-integer powers (f the squarefree part).
fn exact_int_pow(n: u64, p: &BigRational) -> Option<TaggedReal> {
    if p.is_zero() || n == 1 {
        return Some(TaggedReal::one());
    }
    let pu = p.numer().to_u32()?;
    let pv = p.denom().to_u32()?;
    let base = BigUint::from(n).pow(pu);
    if pv == 1 {
        return Some(TaggedReal::Rational(BigRational::from(BigInt::from(base))));
    }
    let root = base.nth_root(pv);
    if root.pow(pv) == base {
        return Some(TaggedReal::Rational(BigRational::from(BigInt::from(root))));
    }
    if pv == 2 {
        // n^{pu/2} with pu odd: (n^{(pu-1)/2} s)^1 * sqrt(f) for n = s^2 f
        let (s_part, f) = crate::mp::squarefree_decompose(n);
        let whole = BigUint::from(n).pow((pu - 1) / 2) * BigUint::from(s_part);
        return Some(TaggedReal::quad(
            BigRational::zero(),
            BigRational::from(BigInt::from(whole)),
            f,
        ));
    }
    None
}

// ---------------------------------------------------------------------------
// Ordered families
// ---------------------------------------------------------------------------

/// A growth-sorted basis split into sub-log, sub-polynomial, monomial, and
/// strongly nonpolynomial blocks.
#[derive(Clone, Debug)]
pub struct OrderedFamily {
    pub members: Vec<HardyExpr>,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Block {
    SubLog,
    SubPoly,
    Monomial,
    StronglyNonPoly,
}

fn block_of(e: &HardyExpr) -> Result<Block, HardyError> {
    let (_, lead) = e.leading().ok_or(HardyError::BlockViolation)?;
    if lead.power.is_zero() {
        return Ok(if lead.log_exp <= 1 {
            Block::SubLog
        } else {
            Block::SubPoly
        });
    }
    if e.terms().len() == 1 && lead.is_integer_monomial() {
        return Ok(Block::Monomial);
    }
    // strongly nonpolynomial: x^d < e < x^{d+1} for some integer d
    if !lead.power.is_integer() || lead.log_exp >= 1 {
        Ok(Block::StronglyNonPoly)
    } else {
        Err(HardyError::BlockViolation)
    }
}

/// Sort members into an ordered Hardy family and locate the block cuts.
pub fn ordered_family(members: Vec<HardyExpr>) -> Result<OrderedFamily, HardyError> {
    let mut tagged: Vec<(Block, HardyExpr)> = Vec::new();
    for m in members {
        if m.is_constant() {
            return Err(HardyError::BlockViolation);
        }
        tagged.push((block_of(&m)?, m));
    }
    // stable block order, growth order within a block
    let mut err = None;
    tagged.sort_by(|(b1, e1), (b2, e2)| {
        b1.cmp(b2).then_with(|| match e1.growth_compare(e2) {
            GrowthCmp::StrictlySlower => Ordering::Less,
            GrowthCmp::StrictlyFaster => Ordering::Greater,
            GrowthCmp::Comparable(_) => {
                err = Some(HardyError::NotOrderable);
                Ordering::Equal
            }
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    for w in tagged.windows(2) {
        if matches!(w[0].1.growth_compare(&w[1].1), GrowthCmp::Comparable(_)) {
            return Err(HardyError::NotOrderable);
        }
    }
    let m1 = tagged.iter().filter(|(b, _)| *b == Block::SubLog).count();
    let m2 = m1 + tagged.iter().filter(|(b, _)| *b == Block::SubPoly).count();
    let m3 = m2 + tagged.iter().filter(|(b, _)| *b == Block::Monomial).count();
    Ok(OrderedFamily {
        members: tagged.into_iter().map(|(_, e)| e).collect(),
        m1,
        m2,
        m3,
    })
}

impl OrderedFamily {
    /// Degree (1-based family index of the last nonzero coefficient, 0 for
    /// constants) and the corresponding coefficient.
    pub fn degree_and_leading(&self, e: &HardyExpr) -> Result<(usize, TaggedReal), HardyError> {
        let mut coeffs: Vec<TaggedReal> = vec![TaggedReal::zero(); self.members.len()];
        let mut rem = e.clone();
        // eliminate in decreasing growth order
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&i, &j| {
            match self.members[i].growth_compare(&self.members[j]) {
                GrowthCmp::StrictlySlower => Ordering::Greater,
                GrowthCmp::StrictlyFaster => Ordering::Less,
                GrowthCmp::Comparable(_) => Ordering::Equal,
            }
        });
        for idx in order {
            let q = &self.members[idx];
            let (qc, qa) = q.leading().ok_or(HardyError::NotInSpan)?;
            if let Some((rc, _)) = rem.terms().iter().find(|(_, a)| a == qa) {
                let beta = rc.div(qc);
                rem = rem.sub(&q.scale(&beta));
                coeffs[idx] = beta;
            }
        }
        if !rem.terms().is_empty() {
            return Err(HardyError::NotInSpan);
        }
        for i in (0..coeffs.len()).rev() {
            if !coeffs[i].is_zero() {
                return Ok((i + 1, coeffs[i].clone()));
            }
        }
        Ok((0, rem.constant_part().clone()))
    }
}

/// `classify(c_i a_i - c_j a_j)`.
pub fn difference_class(
    a_i: &HardyExpr,
    a_j: &HardyExpr,
    c_i: &TaggedReal,
    c_j: &TaggedReal,
) -> Result<ClassificationResult, HardyError> {
    a_i.scale(c_i).sub(&a_j.scale(c_j)).classify()
}

/// The corollary's non-pathology predicate: for every real `(c_i, c_j) != 0`,
/// the combination is an almost rational polynomial or stays logarithmically
/// away from rational polynomials.
///
/// Decided by finite case analysis over cancellation ratios. Exact whenever
/// at most one integer monomial appears above log, or all coefficients are
/// rational; otherwise `Undecidable`.
pub fn difference_nonpathological(
    a_i: &HardyExpr,
    a_j: &HardyExpr,
) -> Result<bool, HardyError> {
    // A combination is bad iff its log-atom coefficient survives while all
    // above-log atoms vanish or strip into a rational polynomial.
    let log_atom = GrowthAtom::log(1);
    let coeff_of = |e: &HardyExpr, a: &GrowthAtom| -> TaggedReal {
        e.terms()
            .iter()
            .find(|(_, b)| b == a)
            .map(|(c, _)| c.clone())
            .unwrap_or_else(TaggedReal::zero)
    };
    let mut atoms: Vec<GrowthAtom> = Vec::new();
    for (_, a) in a_i.terms().iter().chain(a_j.terms()) {
        if !atoms.contains(a) {
            atoms.push(a.clone());
        }
    }
    let above: Vec<&GrowthAtom> = atoms.iter().filter(|a| a.above_log()).collect();
    let monos: Vec<&GrowthAtom> = above
        .iter()
        .copied()
        .filter(|a| a.is_integer_monomial())
        .collect();
    let hard: Vec<&GrowthAtom> = above
        .iter()
        .copied()
        .filter(|a| !a.is_integer_monomial())
        .collect();
    if monos.len() > 1 {
        let all_rational = a_i
            .terms()
            .iter()
            .chain(a_j.terms())
            .all(|(c, _)| c.rationality() == Rationality::Rational);
        if !all_rational {
            return Err(HardyError::Undecidable);
        }
    }

    // axis candidates and cancellation ratios for the two-sided case
    let bad = |ci: &TaggedReal, cj: &TaggedReal| -> Result<bool, HardyError> {
        let e = a_i.scale(ci).sub(&a_j.scale(cj));
        let lc = coeff_of(&e, &log_atom);
        if lc.is_zero() {
            return Ok(false);
        }
        for a in &hard {
            if !coeff_of(&e, a).is_zero() {
                return Ok(false);
            }
        }
        // remaining above-log monomials must admit a common rational rescaling
        let vals: Vec<TaggedReal> = monos
            .iter()
            .map(|a| coeff_of(&e, a))
            .filter(|c| !c.is_zero())
            .collect();
        if vals.is_empty() {
            return Ok(true);
        }
        for v in vals.iter().skip(1) {
            let ratio = v.div(&vals[0]);
            match ratio.is_rational() {
                Ok(true) => {}
                Ok(false) => return Ok(false),
                Err(_) => return Err(HardyError::Undecidable),
            }
        }
        Ok(true)
    };

    // axes
    if bad(&TaggedReal::one(), &TaggedReal::zero())? {
        return Ok(false);
    }
    if bad(&TaggedReal::zero(), &TaggedReal::one())? {
        return Ok(false);
    }
    // both nonzero: candidate ratios where some above-log atom cancels,
    // plus one generic probe
    let mut candidates: Vec<TaggedReal> = Vec::new();
    for a in &above {
        let ci = coeff_of(a_i, a);
        let cj = coeff_of(a_j, a);
        if !cj.is_zero() && !ci.is_zero() {
            candidates.push(ci.div(&cj));
        }
    }
    candidates.push(TaggedReal::ratio(355, 113)); // generic probe
    for c in candidates {
        if bad(&TaggedReal::one(), &c)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Text grammar
// ---------------------------------------------------------------------------

/// Parse the expression grammar, e.g.
/// `2*x^{3/2} + sqrt(2)*x + 3*log(x)^2 + 1/2`.
///
/// `sqrt(d)` yields a quadratic irrational, `~1.4142` a flagged float, and
/// `log(x)` folds `ln 2` factors onto the base-2 log atom.
pub fn parse(input: &str) -> Result<HardyExpr, ParseError> {
    Parser {
        s: input.as_bytes(),
        pos: 0,
    }
    .parse_expr()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub what: &'static str,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: expected {}", self.pos, self.what)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &'static str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn err(&self, what: &'static str) -> ParseError {
        ParseError {
            pos: self.pos,
            what,
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.s[self.pos..].starts_with(kw.as_bytes()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn parse_expr(&mut self) -> Result<HardyExpr, ParseError> {
        self.ws();
        let mut acc = HardyExpr::zero();
        let mut sign = 1i64;
        if self.eat(b'-') {
            sign = -1;
        } else {
            let _ = self.eat(b'+');
        }
        loop {
            let t = self.parse_term()?;
            acc = acc.add(&t.scale(&TaggedReal::from_int(sign)));
            self.ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    sign = 1;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -1;
                }
                None => return Ok(acc),
                _ => return Err(self.err("'+', '-', or end of input")),
            }
            self.ws();
        }
    }

    fn parse_term(&mut self) -> Result<HardyExpr, ParseError> {
        let mut coeff = TaggedReal::one();
        let mut power = BigRational::zero();
        let mut log_exp: u32 = 0;
        loop {
            self.ws();
            match self.peek() {
                Some(b'~') => {
                    self.pos += 1;
                    let v = self.parse_float()?;
                    coeff = coeff.mul(&TaggedReal::float(v, false));
                }
                Some(b'x') => {
                    self.pos += 1;
                    let p = self.parse_opt_exponent()?;
                    power += p;
                }
                Some(c) if c.is_ascii_digit() => {
                    let r = self.parse_rational()?;
                    coeff = coeff.mul(&TaggedReal::Rational(r));
                }
                Some(b's') if self.keyword("sqrt") => {
                    self.expect(b'(', "'(' after sqrt")?;
                    let d = self.parse_uint()?;
                    self.expect(b')', "')' after sqrt argument")?;
                    coeff = coeff.mul(&TaggedReal::sqrt(d));
                }
                Some(b'l') if self.keyword("log2(x)") => {
                    let k = self.parse_opt_int_exponent()?;
                    log_exp += k;
                }
                Some(b'l') if self.keyword("log(x)") => {
                    let k = self.parse_opt_int_exponent()?;
                    log_exp += k;
                    coeff = coeff.mul(&TaggedReal::float_dd(Dd::LN2.powi(k), true));
                }
                _ => return Err(self.err("a factor")),
            }
            self.ws();
            if !self.eat(b'*') {
                break;
            }
        }
        if power.is_zero() && log_exp == 0 {
            Ok(HardyExpr::constant(coeff))
        } else {
            Ok(HardyExpr::term(coeff, GrowthAtom::new(power, log_exp)))
        }
    }

    fn parse_opt_exponent(&mut self) -> Result<BigRational, ParseError> {
        if !self.eat(b'^') {
            return Ok(BigRational::one());
        }
        if self.eat(b'{') {
            let num = self.parse_uint()? as i64;
            let den = if self.eat(b'/') {
                self.parse_uint()? as i64
            } else {
                1
            };
            self.expect(b'}', "'}' closing the exponent")?;
            Ok(BigRational::new(BigInt::from(num), BigInt::from(den)))
        } else {
            Ok(BigRational::from(BigInt::from(self.parse_uint()? as i64)))
        }
    }

    fn parse_opt_int_exponent(&mut self) -> Result<u32, ParseError> {
        if !self.eat(b'^') {
            return Ok(1);
        }
        Ok(self.parse_uint()? as u32)
    }

    fn parse_uint(&mut self) -> Result<u64, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("an integer"));
        }
        core::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("an integer"))
    }

    fn parse_rational(&mut self) -> Result<BigRational, ParseError> {
        let num = self.parse_uint()? as i64;
        if self.eat(b'/') {
            let den = self.parse_uint()? as i64;
            Ok(BigRational::new(BigInt::from(num), BigInt::from(den)))
        } else {
            Ok(BigRational::from(BigInt::from(num)))
        }
    }

    fn parse_float(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'-')
        {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("a float literal"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr(s: &str) -> HardyExpr {
        parse(s).unwrap()
    }

    #[test]
    fn eval_exact_power() {
        // x^{3/2} at 4 -> 8
        let e = expr("x^{3/2}");
        let v = e.eval(Dd::from_f64(4.0)).unwrap();
        assert!((v.to_f64() - 8.0).abs() < 1e-28);
    }

    #[test]
    fn eval_natural_log() {
        // log x at e^2 -> 2, within 1e-18
        let e = expr("log(x)");
        let x = Dd::from_f64(2.0).exp();
        let v = e.eval(x).unwrap();
        assert!((v.to_f64() - 2.0).abs() < 1e-18, "v={}", v.to_f64());
    }

    #[test]
    fn eval_matches_mp_oracle() {
        // sqrt(2)*x + log(x) at 100: 220-bit oracle value
        let e = expr("sqrt(2)*x + log(x)");
        let v = e.eval(Dd::from_f64(100.0)).unwrap();
        let oracle = 146.0265264232975962482048553303385362722_f64;
        assert!((v.to_f64() - oracle).abs() < 1e-13 * 146.0);
        // tighter check through the dd split of the oracle
        let hi = 146.02652642329758;
        let lo = 1.3879372773774019e-14;
        let err = (v - Dd::new(hi, lo)).to_f64().abs();
        assert!(err < 1e-25, "err={err:e}");
    }

    #[test]
    fn eval_domain_error() {
        assert_eq!(expr("x").eval(Dd::from_f64(0.5)), Err(HardyError::Domain));
    }

    #[test]
    fn floor_iter_values() {
        assert_eq!(expr("x^{3/2}").floor_iter(4).unwrap(), BigInt::from(8));
        assert_eq!(expr("x^{3/2}").floor_iter(5).unwrap(), BigInt::from(11));
        assert_eq!(expr("log2(x)").floor_iter(1024).unwrap(), BigInt::from(10));
        assert_eq!(expr("log2(x)").floor_iter(1023).unwrap(), BigInt::from(9));
        // frozen 220-bit oracle values for x^{3/2} + sqrt(2) x
        let e = expr("x^{3/2} + sqrt(2)*x");
        assert_eq!(e.floor_iter(10).unwrap(), BigInt::from(45));
        assert_eq!(e.floor_iter(1000).unwrap(), BigInt::from(33036));
        assert_eq!(e.floor_iter(999_983).unwrap(), BigInt::from(1_001_388_689u64));
    }

    #[test]
    fn floor_iter_exact_quad_path() {
        // sqrt(2)*x at n=formula: exact quadratic arithmetic, never ambiguous
        let e = expr("sqrt(2)*x");
        assert_eq!(e.floor_iter(1_000_000).unwrap(), BigInt::from(1_414_213));
    }

    #[test]
    fn floor_within_one_of_eval() {
        let e = expr("x^{3/2} + log(x)");
        for n in [2u64, 17, 1003, 65536] {
            let f = e.floor_iter(n).unwrap();
            let v = e.eval(Dd::from_f64(n as f64)).unwrap().to_f64();
            let fv = f.to_f64().unwrap();
            assert!(fv <= v && v < fv + 1.0, "n={n}");
        }
    }

    #[test]
    fn growth_comparisons() {
        let cases = [
            ("x*log2(x)", "x^{3/2}", GrowthCmp::StrictlySlower),
            ("log2(x)^2", "x^{1/100}", GrowthCmp::StrictlySlower),
            ("x^2", "x*log2(x)", GrowthCmp::StrictlyFaster),
        ];
        for (a, b, want) in cases {
            assert_eq!(expr(a).growth_compare(&expr(b)), want, "{a} vs {b}");
        }
        match expr("2*x^2").growth_compare(&expr("x^2")) {
            GrowthCmp::Comparable(r) => assert_eq!(r, TaggedReal::from_int(2)),
            other => panic!("expected Comparable, got {other:?}"),
        }
    }

    #[test]
    fn classification() {
        assert!(matches!(
            expr("x^2 + 1/2*x").classify().unwrap(),
            ClassificationResult::AlmostRationalPolynomial(_)
        ));
        assert_eq!(
            expr("x^{3/2}").classify().unwrap(),
            ClassificationResult::LogFarFromQ
        );
        assert_eq!(
            expr("sqrt(2)*x").classify().unwrap(),
            ClassificationResult::LogFarFromQ
        );
        assert_eq!(
            expr("log2(x)").classify().unwrap(),
            ClassificationResult::SubLogarithmic
        );
        assert_eq!(
            expr("x + log2(x)").classify().unwrap(),
            ClassificationResult::SubLogarithmic
        );
        assert!(matches!(
            expr("5").classify().unwrap(),
            ClassificationResult::ConvergesToConstant(_)
        ));
        // untagged float coefficient on a monomial: rationality matters
        assert_eq!(
            expr("~1.4142*x").classify(),
            Err(HardyError::Undecidable)
        );
    }

    #[test]
    fn equidistribution_predicate() {
        assert!(expr("sqrt(2)*x").is_equidistributed().unwrap());
        assert!(!expr("log(x)").is_equidistributed().unwrap());
        assert!(expr("x^2 + x^{1/2}").is_equidistributed().unwrap());
        assert!(!expr("x^2 + 1/3*x").is_equidistributed().unwrap());
    }

    #[test]
    fn independence_pairs() {
        let f = expr("x^{3/2}");
        assert!(!f.pairwise_independent(&expr("x^{3/2} + log2(x)")).unwrap());
        assert!(f.pairwise_independent(&expr("x^{3/2} + x*log2(x)")).unwrap());
        assert!(expr("x").pairwise_independent(&expr("x^2")).unwrap());
        // symmetric
        assert!(expr("x^{3/2} + x*log2(x)").pairwise_independent(&f).unwrap());
        // dependent via scaled copy plus sub-log tail
        let g = expr("3*x^{3/2} + log2(x)");
        assert!(!f.pairwise_independent(&g).unwrap());
    }

    #[test]
    fn ordered_family_blocks() {
        let fam = ordered_family(vec![
            expr("log(x)"),
            expr("log(x)^2"),
            expr("x"),
            expr("x^2"),
            expr("x^{2/3}"),
            expr("x*log2(x)"),
            expr("x^{3/2}"),
        ])
        .unwrap();
        assert_eq!((fam.m1, fam.m2, fam.m3), (1, 2, 4));
        let tail: Vec<_> = fam.members[4..].iter().map(|e| e.to_text()).collect();
        assert_eq!(tail.len(), 3);
        assert!(tail[0].contains("x^{2/3}"));
        assert!(tail[2].contains("x^{3/2}"));
    }

    #[test]
    fn ordered_family_rejections() {
        assert_eq!(
            ordered_family(vec![expr("x"), expr("x")]).unwrap_err(),
            HardyError::NotOrderable
        );
        assert_eq!(
            ordered_family(vec![expr("x")]).unwrap().m3,
            1
        );
        // x^2 + x^{3/2}: same order of growth as x^2 but not a basis monomial
        assert_eq!(
            ordered_family(vec![expr("x^2 + x^{3/2}")]).unwrap_err(),
            HardyError::BlockViolation
        );
    }

    #[test]
    fn degree_and_leading_examples() {
        let fam = ordered_family(vec![
            expr("log(x)"),
            expr("log(x)^2"),
            expr("x"),
            expr("x^2"),
            expr("x^{2/3}"),
            expr("x*log2(x)"),
            expr("x^{3/2}"),
        ])
        .unwrap();
        let e = expr("2*x^{3/2} + log(x)");
        let (deg, coeff) = fam.degree_and_leading(&e).unwrap();
        assert_eq!(deg, 7); // x^{3/2} is the last member
        assert_eq!(coeff, TaggedReal::from_int(2));
        let (deg0, c0) = fam.degree_and_leading(&expr("5")).unwrap();
        assert_eq!(deg0, 0);
        assert_eq!(c0, TaggedReal::from_int(5));
        assert_eq!(
            fam.degree_and_leading(&expr("x^3")).unwrap_err(),
            HardyError::NotInSpan
        );
    }

    #[test]
    fn difference_classification() {
        // n + log2(n) vs n: difference is log2(n), pathological
        assert_eq!(
            difference_class(
                &expr("x + log2(x)"),
                &expr("x"),
                &TaggedReal::one(),
                &TaggedReal::one()
            )
            .unwrap(),
            ClassificationResult::SubLogarithmic
        );
        // sqrt2 x vs x with (1, sqrt2): exact cancellation
        let r = difference_class(
            &expr("sqrt(2)*x"),
            &expr("x"),
            &TaggedReal::one(),
            &TaggedReal::sqrt(2),
        )
        .unwrap();
        assert!(matches!(r, ClassificationResult::ConvergesToConstant(c) if c.is_zero()));
    }

    #[test]
    fn nonpathology_predicate() {
        assert!(!difference_nonpathological(&expr("x + log2(x)"), &expr("x")).unwrap());
        assert!(difference_nonpathological(&expr("x^2"), &expr("x")).unwrap());
        assert!(difference_nonpathological(&expr("x^{3/2}"), &expr("x")).unwrap());
        assert!(
            !difference_nonpathological(&expr("x^{3/2} + log2(x)"), &expr("x^{3/2}")).unwrap()
        );
    }

    #[test]
    fn parser_round_trip() {
        for s in [
            "2*x^{3/2} + sqrt(2)*x + 3*log2(x)^2 + 1/2",
            "x",
            "x^2 - x^{1/2}",
            "log2(x) + 7",
            "~1.4142*x",
        ] {
            let e1 = expr(s);
            let canon = e1.to_text();
            let e2 = expr(&canon);
            assert_eq!(e1, e2, "round trip through `{canon}`");
            assert_eq!(canon, e2.to_text());
        }
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse("2*^x").is_err());
        assert!(parse("x^{3/}").is_err());
        assert!(parse("foo").is_err());
    }

    #[test]
    fn real_poly_or_log_far_assumption() {
        assert!(expr("x^2").real_poly_or_log_far());
        assert!(expr("sqrt(2)*x^2 + x").real_poly_or_log_far()); // real polynomial
        assert!(expr("x^{3/2}").real_poly_or_log_far());
        assert!(!expr("x + log2(x)").real_poly_or_log_far());
    }
}
