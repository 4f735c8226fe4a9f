//! Numerical quadrature on triangles.
//!
//! A single fixed rule is used for all area integrals: a 5x5 Gauss-Legendre
//! product rule collapsed from the unit square onto the reference triangle.
//! It integrates bivariate polynomials up to total degree 8 exactly and its
//! nodes and weights come from closed-form expressions, so the rule carries
//! no tabulation rounding. Integrands with a positive-part kink are fed to
//! the same rule directly; the kink is measure-zero on the triangle.

/// One quadrature point in barycentric coordinates with its weight.
///
/// Weights sum to 1 and are understood relative to the triangle area.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Five-point Gauss-Legendre nodes and weights on [0, 1].
fn gauss5_unit() -> [(f64, f64); 5] {
    let s1 = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let s2 = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let w0 = 128.0 / 225.0;
    let w1 = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    // map x -> (x+1)/2, w -> w/2
    [
        (0.5, w0 * 0.5),
        ((1.0 - s1) * 0.5, w1 * 0.5),
        ((1.0 + s1) * 0.5, w1 * 0.5),
        ((1.0 - s2) * 0.5, w2 * 0.5),
        ((1.0 + s2) * 0.5, w2 * 0.5),
    ]
}

/// The fixed degree-8 rule: 25 points on the reference triangle.
///
/// Built by the Duffy map (u, v) -> (u, v(1 - u)); the Jacobian (1 - u) is
/// absorbed into the weights, which are normalized to sum to 1.
pub fn triangle_rule() -> &'static [QuadPoint] {
    use std::sync::OnceLock;
    static RULE: OnceLock<Vec<QuadPoint>> = OnceLock::new();
    RULE.get_or_init(|| {
        let g = gauss5_unit();
        let mut pts = Vec::with_capacity(25);
        for &(u, wu) in &g {
            for &(v, wv) in &g {
                let x = u;
                let y = v * (1.0 - u);
                // Jacobian (1-u); reference triangle area is 1/2, so scale by 2
                let w = wu * wv * (1.0 - u) * 2.0;
                pts.push(QuadPoint { bary: [1.0 - x - y, x, y], weight: w });
            }
        }
        pts
    })
}
