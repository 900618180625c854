//! log I₀ against an exact rational evaluation of the power series.

use ndgraph::special::log_bessel_i0;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

/// I₀(p/q) from Σ (x²/4)^j / (j!)² in exact rational arithmetic, truncated
/// once a term drops below 1e-30 of the partial sum.
fn i0_exact(p: i64, q: i64) -> f64 {
    let x = BigRational::new(BigInt::from(p), BigInt::from(q));
    let quarter_x2 = &x * &x / BigRational::from_integer(BigInt::from(4));
    let tiny = BigRational::new(BigInt::one(), BigInt::from(10).pow(30));
    let mut term = BigRational::one();
    let mut sum = BigRational::zero();
    let mut j: u64 = 0;
    loop {
        sum += &term;
        j += 1;
        term = term * &quarter_x2 / BigRational::from_integer(BigInt::from(j * j));
        if j > 10 && term < &sum * &tiny {
            break;
        }
    }
    sum.to_f64().unwrap()
}

#[test]
fn i0_at_one() {
    let exact = i0_exact(1, 1);
    assert!((exact - 1.2660658777520082).abs() < 1e-15);
    let approx = log_bessel_i0(1.0).exp();
    assert!(((approx - exact) / exact).abs() < 1e-12);
}

#[test]
fn relative_error_below_1e8_on_0_to_100() {
    let mut worst: f64 = 0.0;
    // κ = k / 8 for k = 1..=800, plus points straddling the branch split
    let mut points: Vec<(i64, i64)> = (1..=800).map(|k| (k, 8)).collect();
    points.extend([(1, 1000), (19_999, 1000), (20_001, 1000), (99_999, 1000)]);
    for (p, q) in points {
        let kappa = p as f64 / q as f64;
        let exact = i0_exact(p, q);
        let approx = log_bessel_i0(kappa).exp();
        let err = ((approx - exact) / exact).abs();
        worst = worst.max(err);
        assert!(err < 1e-8, "kappa={kappa}: rel err {err}");
    }
    eprintln!("worst relative error of I0 on (0,100]: {worst:e}");
}
