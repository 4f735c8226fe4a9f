//! Shared fixtures and oracles for the integration tests.
//!
//! The oracles here (adaptive quadrature, finite differences, dense algebra)
//! are independent of the library's computational paths on purpose.

#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use rand::Rng;
use shapeopt::fem::{FeField, Rect, Triangulation};
use shapeopt::level::{Scheme, TraceOptions};
use shapeopt::problem::{
    disk_control, Constraints, DirectionRule, GammaRule, NormalDerivativeMisfit, Problem,
    ProblemSpec, SourceField, TargetField,
};

pub fn example_1a_spec() -> ProblemSpec {
    ProblemSpec {
        rect: Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(),
        source: SourceField::Const(-4.0),
        cost: Arc::new(NormalDerivativeMisfit { target: TargetField::Const(1.0) }),
        epsilon: 1e-4,
        tol: 1e-6,
        trace: TraceOptions { scheme: Scheme::ForwardEuler, ..Default::default() },
        direction: DirectionRule::Adjoint,
        gamma: GammaRule::InverseSupNorm,
        max_iterations: 50,
        constraints: Constraints::default(),
        monitor_point: None,
    }
}

pub fn build_problem(nx: usize, spec: ProblemSpec) -> Problem {
    let mesh = Arc::new(Triangulation::structured(spec.rect, nx, nx).unwrap());
    Problem::new(spec, mesh, 1).unwrap()
}

/// The default desk-scale problem, built once per test binary.
pub fn shared_problem() -> &'static Problem {
    static PROBLEM: OnceLock<Problem> = OnceLock::new();
    PROBLEM.get_or_init(|| build_problem(80, example_1a_spec()))
}

/// Level coefficients of the translated-disk initial point (Example 1a).
pub fn g0_example_1a(problem: &Problem) -> FeField {
    FeField::interpolate(problem.state_space.clone(), |p| {
        (p[0] - 0.2).powi(2) + (p[1] - 0.2).powi(2) - 0.25
    })
}

/// Level coefficients of the annulus initial point (Example 1b).
pub fn g0_example_1b(problem: &Problem) -> FeField {
    FeField::interpolate(problem.state_space.clone(), |p| {
        let d2 = (p[0] - 0.2).powi(2) + (p[1] - 0.2).powi(2);
        (d2 - 0.16).max(0.04 - d2)
    })
}

pub fn zero_control(problem: &Problem) -> FeField {
    FeField::zeros(problem.control_space.clone())
}

/// Near-optimal manufactured point: the origin disk of radius 0.5 with the
/// control that reproduces its exact solution, blended to zero near the
/// outer boundary.
pub fn manufactured_disk_point(problem: &Problem) -> (FeField, FeField) {
    let g = FeField::interpolate(problem.state_space.clone(), |p| {
        p[0] * p[0] + p[1] * p[1] - 0.25
    });
    let u = FeField::interpolate(problem.control_space.clone(), |p| {
        disk_control([0.0, 0.0], 0.5, 0.78, 0.95, -4.0, p)
    });
    (g, u)
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
}

/// A smooth pseudo-random field made of a few low-frequency waves.
pub fn random_smooth_field(problem: &Problem, rng: &mut impl Rng) -> FeField {
    let mut waves = Vec::new();
    for _ in 0..4 {
        let kx: f64 = rng.gen_range(0.5..2.5);
        let ky: f64 = rng.gen_range(0.5..2.5);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.gen_range(-0.5..0.5);
        waves.push((kx, ky, phase, amp));
    }
    FeField::interpolate(problem.state_space.clone(), move |p| {
        waves.iter().map(|&(kx, ky, ph, a)| a * (kx * p[0] + ky * p[1] + ph).cos()).sum()
    })
}

pub fn random_control(problem: &Problem, rng: &mut impl Rng) -> FeField {
    let coeffs = (0..problem.control_space.num_nodes())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    FeField::from_coeffs(problem.control_space.clone(), coeffs)
}

/// Adaptive 2D quadrature over a rectangle by recursive bisection with a
/// 3x3 Gauss rule per cell; independent of the FE quadrature.
pub fn adaptive_quadrature(
    f: &impl Fn([f64; 2]) -> f64,
    rect: (f64, f64, f64, f64),
    tol: f64,
) -> f64 {
    fn gauss3(f: &impl Fn([f64; 2]) -> f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let s = (0.6f64).sqrt();
        let nodes = [-s, 0.0, s];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let (hx, hy) = ((x1 - x0) * 0.5, (y1 - y0) * 0.5);
        let (cx, cy) = ((x0 + x1) * 0.5, (y0 + y1) * 0.5);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += weights[i] * weights[j] * f([cx + hx * nodes[i], cy + hy * nodes[j]]);
            }
        }
        acc * hx * hy
    }
    fn recurse(
        f: &impl Fn([f64; 2]) -> f64,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let coarse = gauss3(f, x0, x1, y0, y1);
        let (xm, ym) = ((x0 + x1) * 0.5, (y0 + y1) * 0.5);
        let fine = gauss3(f, x0, xm, y0, ym)
            + gauss3(f, xm, x1, y0, ym)
            + gauss3(f, x0, xm, ym, y1)
            + gauss3(f, xm, x1, ym, y1);
        if (fine - coarse).abs() <= tol || depth >= 14 {
            fine
        } else {
            let t = tol * 0.25;
            recurse(f, x0, xm, y0, ym, t, depth + 1)
                + recurse(f, xm, x1, y0, ym, t, depth + 1)
                + recurse(f, x0, xm, ym, y1, t, depth + 1)
                + recurse(f, xm, x1, ym, y1, t, depth + 1)
        }
    }
    recurse(f, rect.0, rect.1, rect.2, rect.3, tol, 0)
}
