//! Modified Bessel function of the first kind, order zero.

/// Above this argument the asymptotic expansion is used. The expansion's
/// smallest term is about `exp(-2x)`, so at 20 it is below 1e-17 relative.
const SERIES_LIMIT: f64 = 20.0;

/// Sum of `(x/2)^(2k) / (k!)^2` for `k >= first`.
fn series(x: f64, first: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    for k in 1..=first {
        term *= q / f64::from(k * k);
    }
    let mut sum = term;
    let mut k = first;
    loop {
        k += 1;
        term *= q / f64::from(k * k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `sqrt(2 pi x) e^(-x) I0(x)` for large `x`.
fn asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k: f64 = 0.0;
    loop {
        let next = term * (2.0 * k + 1.0).powi(2) / (8.0 * (k + 1.0) * x);
        if next.abs() >= term.abs() || next.abs() <= 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum
}

/// `I0(x)`.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(x, 0)
    } else {
        // overflows to inf past ~713, like the function itself
        let scaled = asymptotic_scaled(x) / (2.0 * std::f64::consts::PI * x).sqrt();
        scaled * (0.5 * x).exp() * (0.5 * x).exp()
    }
}

/// `exp(-|x|) I0(x)`, finite for every finite `x`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(x, 0) * (-x).exp()
    } else {
        asymptotic_scaled(x) / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// `I0(x) - 1` without cancellation for small `x`.
pub fn bessel_i0m1(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        if x == 0.0 {
            0.0
        } else {
            series(x, 1)
        }
    } else {
        bessel_i0(x) - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from mpmath.besseli at 30 digits.
    const I0: [(f64, f64); 8] = [
        (0.0, 1.0),
        (0.5, 1.0634833707413235),
        (1.0, 1.2660658777520083),
        (3.75, 9.118945860844567),
        (10.0, 2815.7166284662545),
        (19.9, 39513376.52006682),
        (20.1, 48017874.10713650),
        (50.0, 2.9325537838493363e20),
    ];
    const I0E: [(f64, f64); 4] = [
        (1.0, 0.46575960759364043),
        (25.0, 0.08019677354743671),
        (700.0, 0.015081295651531358),
        (1e6, 0.00039894233026924578),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn matches_reference_values() {
        for (x, want) in I0 {
            assert!(rel(bessel_i0(x), want) < 1e-10, "I0({x}) = {} vs {want}", bessel_i0(x));
        }
        for (x, want) in I0E {
            assert!(rel(bessel_i0e(x), want) < 1e-10, "I0e({x}) = {} vs {want}", bessel_i0e(x));
        }
    }

    #[test]
    fn continuous_across_the_switch() {
        let below = bessel_i0e(SERIES_LIMIT);
        let above = bessel_i0e(SERIES_LIMIT + 1e-9);
        assert!(rel(above, below) < 1e-10);
    }

    #[test]
    fn minus_one_is_accurate_for_tiny_arguments() {
        let x: f64 = 1e-6;
        // I0(x) - 1 = x^2/4 + x^4/64 + ...
        let want = x * x / 4.0 + x.powi(4) / 64.0;
        assert!(rel(bessel_i0m1(x), want) < 1e-14);
        assert_eq!(bessel_i0m1(0.0), 0.0);
        assert!(rel(bessel_i0m1(2.0), bessel_i0(2.0) - 1.0) < 1e-14);
    }

    #[test]
    fn even_function() {
        assert_eq!(bessel_i0(-2.5), bessel_i0(2.5));
        assert_eq!(bessel_i0e(-30.0), bessel_i0e(30.0));
    }
}
