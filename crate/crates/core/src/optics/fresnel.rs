//! Fresnel integrals `C(x) = ∫₀ˣ cos(πt²/2) dt` and `S(x) = ∫₀ˣ sin(πt²/2) dt`.
//!
//! Power series below |x| = 1.5, modified-Lentz continued fraction for the
//! complementary error function above it. Both are iterated to f64 precision.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 200;
const TINY: f64 = 1e-300;
const SERIES_LIMIT: f64 = 1.5;

/// Returns `(C(x), S(x))`.
pub fn fresnel(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (c, s) = if ax < 1e-150 {
        (ax, 0.0)
    } else if ax <= SERIES_LIMIT {
        series(ax)
    } else {
        continued_fraction(ax)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn series(ax: f64) -> (f64, f64) {
    // Terms alternate between the C and S sums: x^(2k+1) (π/2)^k / (k! (2k+1)).
    let fact = FRAC_PI_2 * ax * ax;
    let mut sum_c = ax;
    let mut sum_s = 0.0;
    let mut term = ax;
    let mut sign = 1.0;
    let mut odd = true;
    let mut n = 3.0;
    for k in 1..MAX_ITER {
        term *= fact / k as f64;
        let contrib = sign * term / n;
        if odd {
            sum_s += contrib;
            sign = -sign;
        } else {
            sum_c += contrib;
        }
        let reference = if odd { sum_s.abs() } else { sum_c.abs() };
        if term < reference * EPS {
            break;
        }
        odd = !odd;
        n += 2.0;
    }
    (sum_c, sum_s)
}

fn continued_fraction(ax: f64) -> (f64, f64) {
    let one = Complex64::new(1.0, 0.0);
    let pix2 = PI * ax * ax;
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / TINY, 0.0);
    let mut d = one / b;
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..MAX_ITER {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += Complex64::new(4.0, 0.0);
        d = one / (d * a + b);
        cc = b + Complex64::new(a, 0.0) / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    h *= Complex64::new(ax, -ax);
    let phase = Complex64::new((0.5 * pix2).cos(), (0.5 * pix2).sin());
    let cs = Complex64::new(0.5, 0.5) * (one - phase * h);
    (cs.re, cs.im)
}
