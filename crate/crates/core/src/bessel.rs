//! Bessel function of the first kind, order zero.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 12.0;

/// `J0(x)`, accurate to roughly 1e-12 absolute over the real line.
///
/// Power series below `|x| = 12`, Hankel's asymptotic expansion above it.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        series(x)
    } else {
        asymptotic(x)
    }
}

fn series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            return sum;
        }
        k += 1.0;
    }
}

fn asymptotic(x: f64) -> f64 {
    // a_k = prod_{j=1..k} (2j-1)^2 / (k! (8x)^k); P takes even k, Q odd k,
    // with sign (-1)^ceil(k/2).
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..40 {
        if k > 0 {
            let kf = k as f64;
            a *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        }
        if a > prev {
            break;
        }
        prev = a;
        let sign = if ((k + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
        if a < 1e-17 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
