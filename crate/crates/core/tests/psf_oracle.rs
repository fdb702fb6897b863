mod common;

use common::fresnel_oracle;
use common::psf_table::DEFAULT_PROFILE;
use shiftcam::{compute_psf, OpticsConfig};

#[test]
fn default_profile_matches_frozen_table() {
    let report = compute_psf(&OpticsConfig::default()).unwrap();
    let r = 11;
    for (k, want) in DEFAULT_PROFILE.iter().enumerate() {
        assert!((report.profile[r + k] - want).abs() < 1e-6, "P({k}) = {}", report.profile[r + k]);
        assert!((report.profile[r - k] - want).abs() < 1e-6);
    }
    let total = DEFAULT_PROFILE[0] + 2.0 * DEFAULT_PROFILE[1..].iter().sum::<f64>();
    let centre = DEFAULT_PROFILE[0] * DEFAULT_PROFILE[0] / (total * total);
    assert!((report.psf.at(0, 0) - centre).abs() < 1e-6);
    assert!((centre - 0.161_624).abs() < 1e-6);
}

#[test]
fn brute_force_oracle_agrees_with_frozen_table() {
    let prof = fresnel_oracle::pixel_profile(&OpticsConfig::default());
    for (k, want) in DEFAULT_PROFILE.iter().enumerate() {
        assert!((prof[11 + k] - want).abs() < 1e-8, "P({k}) = {}", prof[11 + k]);
    }
}

#[test]
fn small_radius_kernels_match_oracle() {
    for (z, r) in [(30e-3, 4), (120e-3, 6), (5e-3, 2)] {
        let cfg = OpticsConfig {
            propagation_distance: z,
            kernel_radius: r,
            ..OpticsConfig::default()
        };
        let got = compute_psf(&cfg).unwrap();
        let want = fresnel_oracle::kernel(&cfg);
        for (g, w) in got.psf.kernel().as_slice().iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "z={z} r={r}: {g} vs {w}");
        }
    }
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let rule = fresnel_oracle::gauss_legendre(20);
    let s: f64 = rule.iter().map(|(x, w)| w * x.powi(38)).sum();
    assert!((s - 2.0 / 39.0).abs() < 1e-14);
}
