//! Special functions used by the densities and the probit model.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

/// Exponentially scaled modified Bessel function of the first kind, `e^{-x} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // Asymptotic series; the smallest term at x = 25 is far below f64 epsilon.
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0f64;
        while k < 60.0 {
            let next = term * (2.0 * k - 1.0).powi(2) / (k * 8.0 * x);
            if next.abs() > term.abs() || next.abs() < 1e-18 * sum {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Standard normal density.
pub fn norm_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Standard normal cumulative distribution function.
pub fn norm_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// `ln Φ(t)`, accurate far into the lower tail.
pub fn log_norm_cdf(t: f64) -> f64 {
    if t > -30.0 {
        norm_cdf(t).ln()
    } else {
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2)).ln()
    }
}

/// `φ(t) / Φ(t)` without underflow.
pub fn inv_mills(t: f64) -> f64 {
    if t > -30.0 {
        norm_pdf(t) / norm_cdf(t)
    } else {
        let t2 = t * t;
        -t / (1.0 - 1.0 / t2 + 3.0 / (t2 * t2))
    }
}
