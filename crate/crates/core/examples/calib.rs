// convergence calibration for criterion-1 style tuples
use hardy_ergo_core::expsums::*;
use hardy_ergo_core::hardy::parse;
use hardy_ergo_core::tagged::TaggedReal;
use num_rational::BigRational;
use num_bigint::BigInt;

fn rat(n: i64, d: i64) -> BigRational { BigRational::new(BigInt::from(n), BigInt::from(d)) }

fn main() {
    let beta = TaggedReal::sqrt(2);
    let cases: Vec<(&str, BigRational, BigRational, TaggedReal, TaggedReal)> = vec![
        // (label, q, r, t, s) with witness t = q + beta(r+s) ... t - beta s = q + beta r
        ("E2 origin", rat(0,1), rat(0,1), TaggedReal::zero(), TaggedReal::zero()),
        ("E1 q=1/2", rat(1,2), rat(0,1), TaggedReal::ratio(1,2), TaggedReal::zero()),
        ("E2 s=1/2", rat(0,1), rat(0,1), beta.mul(&TaggedReal::ratio(1,2)), TaggedReal::ratio(1,2)),
        ("E1 r=1/3", rat(0,1), rat(1,3), beta.mul(&TaggedReal::ratio(1,3)), TaggedReal::zero()),
        ("E3 t=1", rat(0,1), rat(0,1), TaggedReal::one(), TaggedReal::one().div(&beta)),
    ];
    let a = parse("x^{3/2}").unwrap();
    let params = ExpSumParams::new(a, beta.clone(), TaggedReal::zero());
    for (label, q, r, t, s) in cases {
        let closed = closed_a(&params, &ExpSumCase::Generic, &q, &r, &t, &s).unwrap();
        let b1 = brute_a(&params, &t, &s, 1_000_000).unwrap();
        let b4 = brute_a(&params, &t, &s, 4_000_000).unwrap();
        let e1 = (closed.value - b1.value).abs();
        let e4 = (closed.value - b4.value).abs();
        println!("{label}: closed=({:.4},{:.4}) err1e6={:.5} err4e6={:.5} ratio={:.3} skip={}",
                 closed.value.re, closed.value.im, e1, e4, e4/e1, b1.skipped);
    }
}
