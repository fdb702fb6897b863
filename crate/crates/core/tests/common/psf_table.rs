/// 1-D pixel fractions `P(0..=11)` of the default geometry (400 nm, 0.1 mm
/// pixels, 60 mm), from adaptive quadrature of the tabulated Fresnel
/// integrals.
pub const DEFAULT_PROFILE: [f64; 12] = [
    0.393784459192,
    0.225297998531,
    0.027233008442,
    0.013538906857,
    0.011520348320,
    0.001723539279,
    0.005994487192,
    0.000995962447,
    0.002560977661,
    0.001580074229,
    0.000739253340,
    0.001674221283,
];

/// Centre entry of the renormalized default kernel.
pub fn default_centre() -> f64 {
    let total = DEFAULT_PROFILE[0] + 2.0 * DEFAULT_PROFILE[1..].iter().sum::<f64>();
    DEFAULT_PROFILE[0] * DEFAULT_PROFILE[0] / (total * total)
}
