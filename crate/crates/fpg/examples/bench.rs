//! Rough per-point timing of the local-expansion apparatus.

use std::time::Instant;

use fpg::apparatus::Apparatus;
use fpg::fixtures;

fn main() {
    for m in [
        fixtures::m_euc(),
        fixtures::m_sph(),
        fixtures::m_rand(),
        fixtures::m_mink(),
    ] {
        let s = m.canonical_spray();
        let p = fixtures::p0();
        let t0 = Instant::now();
        let reps = 5;
        for _ in 0..reps {
            let a = Apparatus::new(&s, &p).unwrap();
            let w = a.weyl().unwrap();
            let d = a.douglas().unwrap();
            std::hint::black_box((w, d));
        }
        println!(
            "{}: apparatus+weyl+douglas {:?}/point",
            m.family_name(),
            t0.elapsed() / reps
        );
    }
}
