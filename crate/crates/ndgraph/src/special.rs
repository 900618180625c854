//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Power series below [`BESSEL_SERIES_LIMIT`], Hankel asymptotic expansion
//! (summed until the terms stop shrinking) above it.

use std::f64::consts::PI;

/// Argument at which evaluation switches from power series to asymptotic form.
pub const BESSEL_SERIES_LIMIT: f64 = 20.0;

const SERIES_MAX_TERMS: usize = 500;
const ASYMPTOTIC_MAX_TERMS: usize = 40;

/// Σ_j (x²/4)^j / (j! (j+ν)!) for ν ∈ {0, 1}.
fn power_series(x: f64, order: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=SERIES_MAX_TERMS {
        let j = j as f64;
        term *= q / (j * (j + order as f64));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Asymptotic factor Σ_k (-1)^k a_k(ν) / x^k so that I_ν(x) ≈ e^x / √(2πx) · factor.
fn asymptotic_factor(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0f64;
    let mut sum = 1.0;
    for k in 1..=ASYMPTOTIC_MAX_TERMS {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// log I₀(x) for x ≥ 0.
pub fn log_bessel_i0(x: f64) -> f64 {
    if x <= BESSEL_SERIES_LIMIT {
        power_series(x, 0).ln()
    } else {
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic_factor(x, 0).ln()
    }
}

/// I₁(x) / I₀(x), the derivative of log I₀.
pub fn bessel_i1_over_i0(x: f64) -> f64 {
    if x <= BESSEL_SERIES_LIMIT {
        0.5 * x * power_series(x, 1) / power_series(x, 0)
    } else {
        asymptotic_factor(x, 1) / asymptotic_factor(x, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_argument_limits() {
        assert_eq!(log_bessel_i0(0.0), 0.0);
        assert!(log_bessel_i0(1e-9).abs() < 1e-17);
        assert_eq!(bessel_i1_over_i0(0.0), 0.0);
    }

    #[test]
    fn branches_agree_at_split() {
        let below = power_series(BESSEL_SERIES_LIMIT, 0).ln();
        let x = BESSEL_SERIES_LIMIT;
        let above = x - 0.5 * (2.0 * PI * x).ln() + asymptotic_factor(x, 0).ln();
        assert!((below - above).abs() < 1e-12, "{below} vs {above}");
        let r_below = 0.5 * x * power_series(x, 1) / power_series(x, 0);
        let r_above = asymptotic_factor(x, 1) / asymptotic_factor(x, 0);
        assert!((r_below - r_above).abs() < 1e-12);
    }

    #[test]
    fn ratio_matches_log_derivative() {
        for &x in &[0.3, 2.0, 7.5, 19.0, 25.0, 80.0] {
            let h = 1e-5;
            let fd = (log_bessel_i0(x + h) - log_bessel_i0(x - h)) / (2.0 * h);
            assert!((fd - bessel_i1_over_i0(x)).abs() < 1e-8, "x={x}");
        }
    }
}
