//! Brute-force Fresnel diffraction of a slit.
//!
//! The field behind a slit of half-width `a` at distance `z` is
//! `U(x) = (λz)^{-1/2} ∫_{-a}^{a} exp(iπ (x - ξ)² / (λz)) dξ`, integrated
//! directly with composite Gauss-Legendre rules (no Fresnel integral
//! special functions). `|U|²` is then integrated over each detector pixel.

use num_complex::Complex64;
use shiftcam::OpticsConfig;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn composite<F: FnMut(f64) -> T, T>(a: f64, b: f64, pieces: usize, rule: &[(f64, f64)], mut f: F, zero: T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let h = (b - a) / pieces as f64;
    let mut acc = zero;
    for p in 0..pieces {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            acc = acc + f(mid + 0.5 * h * x) * (0.5 * h * w);
        }
    }
    acc
}

/// `|U(x)|²` relative to the incident intensity.
pub fn slit_intensity(x: f64, cfg: &OpticsConfig, rule: &[(f64, f64)], pieces: usize) -> f64 {
    let lz = cfg.wavelength * cfg.propagation_distance;
    let a = cfg.pixel_pitch / 2.0;
    let u = composite(
        -a,
        a,
        pieces,
        rule,
        |xi| {
            let d = x - xi;
            Complex64::from_polar(1.0, PI * d * d / lz)
        },
        Complex64::new(0.0, 0.0),
    );
    u.norm_sqr() / lz
}

/// Per-pixel energy fractions `P(i)`, `i = -r..=r`.
pub fn pixel_profile(cfg: &OpticsConfig) -> Vec<f64> {
    let rule = gauss_legendre(20);
    let p = cfg.pixel_pitch;
    let r = cfg.kernel_radius as isize;
    (-r..=r)
        .map(|i| {
            let lo = (i as f64 - 0.5) * p;
            composite(lo, lo + p, 16, &rule, |x| slit_intensity(x, cfg, &rule, 64), 0.0) / p
        })
        .collect()
}

/// Separable kernel `P(i) P(j) / (Σ P)²`, row-major.
pub fn kernel(cfg: &OpticsConfig) -> Vec<f64> {
    let prof = pixel_profile(cfg);
    let t: f64 = prof.iter().sum();
    let n = prof.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = prof[i] * prof[j] / (t * t);
        }
    }
    k
}
