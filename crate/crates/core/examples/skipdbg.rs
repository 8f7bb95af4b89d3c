use hardy_ergo_core::hardy::parse;
use hardy_ergo_core::tagged::TaggedReal;

fn main() {
    let a = parse("x^{3/2}").unwrap();
    let b = a.scale(&TaggedReal::sqrt(2));
    let mut count = 0;
    for n in 1..=1_000_000u64 {
        if a.floor_iter(n).is_err() || b.floor_iter(n).is_err() {
            count += 1;
            if count < 8 {
                println!("skip n={n}: a={:?} b={:?}", a.floor_iter(n).is_err(), b.floor_iter(n).is_err());
            }
        }
    }
    println!("total skips: {count}");
}
