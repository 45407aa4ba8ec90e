//! Exact binomial coverage against `oracles/binomial_coverage.py`.

use lrpi_core::bounds::Side;
use lrpi_core::discrete::binomial_coverage;

#[test]
fn binomial_two_sided_coverage_matches_oracle() {
    let cases = [
        (15, 15, 0.05, false, 0.9664179171765896),
        (15, 15, 0.05, true, 0.9993908689966157),
        (50, 50, 0.1, false, 0.9391724904175835),
        (50, 50, 0.3, false, 0.950206759846908),
        (50, 50, 0.5, false, 0.943110919663213),
    ];
    for (n, m, p, corrected, want) in cases {
        let got = binomial_coverage(n, m, p, 0.95, Side::TwoSided, corrected).unwrap();
        assert!(
            (got - want).abs() < 1e-10,
            "n={n} m={m} p={p} corrected={corrected}: {got} vs {want}"
        );
    }
}
