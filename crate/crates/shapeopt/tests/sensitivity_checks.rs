//! Derivative verification: the adjoint identity, finite-difference oracles
//! for the control and shape derivatives, orbit-variation checks against a
//! perturbed-trace oracle, and the consistency of the two descent-direction
//! code paths.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapeopt::fem::FeField;
use shapeopt::level::{trace, Scheme, TraceOptions};
use shapeopt::optimizer::{evaluate_objective, objective_with_frozen_geometry};
use shapeopt::sensitivity::{solve_variation_ode, solve_variation_pde, SensitivityContext};

/// The proof mechanism of the simplified adjoint: the volume integral of the
/// variation sources against p equals the boundary functional applied to q.
#[test]
fn adjoint_identity_at_the_initial_point() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let p = problem.solver.solve(&ctx.adjoint_rhs).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..10 {
        let r = random_smooth_field(problem, &mut rng);
        let v = random_control(problem, &mut rng);
        // volume side: (B1 V + C1 R)^T P
        let bv = eval.b1.matvec(v.coeffs());
        let cr = ctx.c1.matvec(r.coeffs());
        let lhs: f64 = bv.iter().zip(&cr).zip(&p).map(|((&a, &b), &pi)| (a + b) * pi).sum();
        // boundary side: rhs_adj^T Q
        let q = solve_variation_pde(problem, &eval.b1, &ctx.c1, &r, &v).unwrap();
        let rhs: f64 = ctx.adjoint_rhs.iter().zip(q.coeffs()).map(|(&a, &b)| a * b).sum();
        let err = rel_err(lhs, rhs);
        assert!(err <= 1e-10, "trial {trial}: {lhs:.12e} vs {rhs:.12e} (rel {err:.3e})");
    }
}

/// Same identity at a point with a nonzero control, so the r-coupling term
/// is exercised too.
#[test]
fn adjoint_identity_with_nonzero_control() {
    let problem = shared_problem();
    let (g, u) = manufactured_disk_point(problem);
    let eval = evaluate_objective(problem, g, u).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let p = problem.solver.solve(&ctx.adjoint_rhs).unwrap();
    assert!(ctx.c1.nnz() > 0, "the control coupling must be active");

    let mut rng = ChaCha8Rng::seed_from_u64(57);
    for trial in 0..10 {
        let r = random_smooth_field(problem, &mut rng);
        let v = random_control(problem, &mut rng);
        let bv = eval.b1.matvec(v.coeffs());
        let cr = ctx.c1.matvec(r.coeffs());
        let lhs: f64 = bv.iter().zip(&cr).zip(&p).map(|((&a, &b), &pi)| (a + b) * pi).sum();
        let q = solve_variation_pde(problem, &eval.b1, &ctx.c1, &r, &v).unwrap();
        let rhs: f64 = ctx.adjoint_rhs.iter().zip(q.coeffs()).map(|(&a, &b)| a * b).sum();
        let err = rel_err(lhs, rhs);
        assert!(err <= 1e-10, "trial {trial}: rel {err:.3e}");
    }
}

/// Control-only derivative against a central finite difference of the full
/// objective with the geometry frozen; J is quadratic in the control, so the
/// agreement is tight.
#[test]
fn control_derivative_matches_finite_differences() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let r0 = FeField::zeros(problem.state_space.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let h = 1e-5;
    for trial in 0..10 {
        let v = random_control(problem, &mut rng);
        let dj = ctx.derivative(&r0, &v).unwrap().total;
        let mut up = eval.control.clone();
        let mut dn = eval.control.clone();
        for ((cu, cd), d) in
            up.coeffs_mut().iter_mut().zip(dn.coeffs_mut()).zip(v.coeffs())
        {
            *cu += h * d;
            *cd -= h * d;
        }
        let ju = objective_with_frozen_geometry(problem, &eval, &up).unwrap().j;
        let jd = objective_with_frozen_geometry(problem, &eval, &dn).unwrap().j;
        let fd = (ju - jd) / (2.0 * h);
        let err = rel_err(dj, fd);
        assert!(err <= 1e-5, "trial {trial}: dJ {dj:.10e} vs FD {fd:.10e} (rel {err:.3e})");
    }
}

/// Shape derivative against a central finite difference of the full
/// objective with re-traced orbits. Evaluated at the manufactured
/// near-optimal point where the boundary integrand is small, since the
/// discrete derivative omits the period-variation term; sign agreement and
/// a 10% relative error are the contract.
///
/// The sampled directions vanish at the component's start point: the orbit
/// variations are taken from a fixed start, so the derivative formula covers
/// perturbations that keep that point on the boundary, while the re-traced
/// objective reseeds onto the perturbed zero set.
#[test]
fn shape_derivative_matches_finite_differences() {
    let problem = shared_problem();
    let (g, u) = manufactured_disk_point(problem);
    let eval = evaluate_objective(problem, g.clone(), u.clone()).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let v0 = zero_control(problem);
    let start = eval.boundary.components[0].start();
    let lambda = 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..10 {
        let r_raw = random_smooth_field(problem, &mut rng);
        let at_start = r_raw.evaluate(start).unwrap();
        let r = FeField::from_coeffs(
            problem.state_space.clone(),
            r_raw.coeffs().iter().map(|&c| c - at_start).collect(),
        );
        let dj = ctx.derivative(&r, &v0).unwrap().total;
        let perturb = |sign: f64| {
            let mut gp = g.clone();
            for (c, d) in gp.coeffs_mut().iter_mut().zip(r.coeffs()) {
                *c += sign * lambda * d;
            }
            evaluate_objective(problem, gp, u.clone()).unwrap().breakdown.j
        };
        let fd = (perturb(1.0) - perturb(-1.0)) / (2.0 * lambda);
        assert_eq!(dj.signum(), fd.signum(), "trial {trial}: dJ {dj:.6e} vs FD {fd:.6e}");
        let err = rel_err(dj, fd);
        assert!(err <= 0.1, "trial {trial}: dJ {dj:.6e} vs FD {fd:.6e} (rel {err:.3e})");
    }
}

/// Orbit variation of a pure rescaling of the level function against the
/// finite difference of re-traced orbits from the same start point.
#[test]
fn orbit_variation_matches_perturbed_traces() {
    let problem = shared_problem();
    let g = shapeopt::level::LevelFunction::new(FeField::interpolate(
        problem.state_space.clone(),
        |p| p[0] * p[0] + p[1] * p[1] - 0.25,
    ))
    .unwrap();
    let opts = TraceOptions { scheme: Scheme::RungeKutta4, ..Default::default() };
    let x0 = [0.5, 0.0];
    let comp = trace(&g, x0, &opts).unwrap();

    let beta = 0.7;
    let r = FeField::from_coeffs(
        problem.state_space.clone(),
        g.field().coeffs().iter().map(|&c| beta * c).collect(),
    );
    let w = solve_variation_ode(&g, &comp, &r).unwrap();

    let lambda = 1e-5;
    let mut gp = g.field().clone();
    for (c, d) in gp.coeffs_mut().iter_mut().zip(r.coeffs()) {
        *c += lambda * d;
    }
    let gp = shapeopt::level::LevelFunction::new(gp).unwrap();
    let comp_p = trace(&gp, x0, &opts).unwrap();

    let m = comp.steps().min(comp_p.steps());
    let mut max_err = 0.0f64;
    let mut max_w = 0.0f64;
    for k in 1..=m {
        let z = comp.point(k);
        let zp = comp_p.point(k);
        let fd = [(zp[0] - z[0]) / lambda, (zp[1] - z[1]) / lambda];
        let wk = w[k - 1];
        max_err = max_err.max((wk[0] - fd[0]).abs().max((wk[1] - fd[1]).abs()));
        max_w = max_w.max(fd[0].abs().max(fd[1].abs()));
    }
    assert!(max_w > 1.0, "the variation must be nontrivial, got {max_w}");
    assert!(max_err <= 0.01 * max_w, "sup error {max_err} vs scale {max_w}");
}

/// Trivial orbit variations: zero perturbation and constant perturbation
/// both force W = 0 (the forcing is built from derivatives of r).
#[test]
fn orbit_variation_trivial_cases() {
    let problem = shared_problem();
    let g = shapeopt::level::LevelFunction::new(g0_example_1a(problem)).unwrap();
    let opts = TraceOptions { scheme: Scheme::RungeKutta4, ..Default::default() };
    let comp = trace(&g, [0.7, 0.2], &opts).unwrap();

    let zero = FeField::zeros(problem.state_space.clone());
    for wk in solve_variation_ode(&g, &comp, &zero).unwrap() {
        assert_eq!(wk, [0.0, 0.0]);
    }
    let constant = FeField::interpolate(problem.state_space.clone(), |_| 3.25);
    for wk in solve_variation_ode(&g, &comp, &constant).unwrap() {
        assert!(wk[0].abs() < 1e-12 && wk[1].abs() < 1e-12);
    }
}

/// The variation PDE is linear and vanishes for vanishing data.
#[test]
fn variation_pde_structure() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();

    let r0 = FeField::zeros(problem.state_space.clone());
    let v0 = zero_control(problem);
    let q = solve_variation_pde(problem, &eval.b1, &ctx.c1, &r0, &v0).unwrap();
    assert!(q.coeffs().iter().all(|&c| c == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = random_smooth_field(problem, &mut rng);
    let v = random_control(problem, &mut rng);
    let q1 = solve_variation_pde(problem, &eval.b1, &ctx.c1, &r, &v).unwrap();
    let alpha = -2.5;
    let rs = FeField::from_coeffs(
        problem.state_space.clone(),
        r.coeffs().iter().map(|&c| alpha * c).collect(),
    );
    let vs = FeField::from_coeffs(
        problem.control_space.clone(),
        v.coeffs().iter().map(|&c| alpha * c).collect(),
    );
    let q2 = solve_variation_pde(problem, &eval.b1, &ctx.c1, &rs, &vs).unwrap();
    for (a, b) in q1.coeffs().iter().zip(q2.coeffs()) {
        assert!((alpha * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

/// Derivative is zero along the zero direction and homogeneous of degree one.
#[test]
fn derivative_scaling() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let r0 = FeField::zeros(problem.state_space.clone());
    let v0 = zero_control(problem);
    assert_eq!(ctx.derivative(&r0, &v0).unwrap().total, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r = random_smooth_field(problem, &mut rng);
    let v = random_control(problem, &mut rng);
    let d1 = ctx.derivative(&r, &v).unwrap().total;
    let alpha = 3.75;
    let rs = FeField::from_coeffs(
        problem.state_space.clone(),
        r.coeffs().iter().map(|&c| alpha * c).collect(),
    );
    let vs = FeField::from_coeffs(
        problem.control_space.clone(),
        v.coeffs().iter().map(|&c| alpha * c).collect(),
    );
    let d2 = ctx.derivative(&rs, &vs).unwrap().total;
    assert!(rel_err(d2, alpha * d1) <= 1e-12, "{d2} vs {}", alpha * d1);
}

/// The gradient-type direction reproduces its predicted derivative through
/// the independent evaluation path.
#[test]
fn gradient_direction_two_code_paths_agree() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let dir = ctx.gradient_direction().unwrap();
    assert!(dir.dj < 0.0);
    let recomputed = ctx.derivative(&dir.r, &dir.v).unwrap().total;
    let err = rel_err(recomputed, dir.dj);
    assert!(err <= 1e-10, "predicted {:.12e} vs recomputed {recomputed:.12e} (rel {err:.3e})", dir.dj);
}

/// Same consistency at a nonzero control, where the C1 coupling and the
/// transposed orbit sweep both contribute.
#[test]
fn gradient_direction_consistency_with_control() {
    let problem = shared_problem();
    let (g, u) = manufactured_disk_point(problem);
    let eval = evaluate_objective(problem, g, u).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let dir = ctx.gradient_direction().unwrap();
    let recomputed = ctx.derivative(&dir.r, &dir.v).unwrap().total;
    let err = rel_err(recomputed, dir.dj);
    assert!(err <= 1e-10, "rel {err:.3e}");
}

/// The adjoint direction keeps the q-dependent part of the derivative
/// nonpositive (the adjoint inequality) and descends from the initial point.
#[test]
fn adjoint_direction_inequality_and_descent() {
    let problem = shared_problem();
    let eval =
        evaluate_objective(problem, g0_example_1a(problem), zero_control(problem)).unwrap();
    let ctx = SensitivityContext::new(problem, &eval).unwrap();
    let (dir, breakdown) = ctx.adjoint_direction().unwrap();
    assert!(breakdown.q_part <= 0.0, "q part {}", breakdown.q_part);
    assert!(dir.dj < 0.0, "dJ {}", dir.dj);
    // a small step along the direction must reduce J
    let step = shapeopt::optimizer::line_search(problem, &eval, &dir, 1e-2).unwrap();
    assert!(step.evaluation.breakdown.j < eval.breakdown.j);
}

/// Zero state and zero cost gradient produce a vanishing adjoint direction.
#[test]
fn adjoint_direction_vanishes_without_sources() {
    let spec = shapeopt::problem::ProblemSpec {
        source: shapeopt::problem::SourceField::Const(0.0),
        cost: std::sync::Arc::new(shapeopt::problem::NormalDerivativeMisfit {
            target: shapeopt::problem::TargetField::Const(0.0),
        }),
        ..example_1a_spec()
    };
    let problem = build_problem(24, spec);
    let eval =
        evaluate_objective(&problem, g0_example_1a(&problem), zero_control(&problem)).unwrap();
    assert_eq!(eval.breakdown.j, 0.0);
    let ctx = SensitivityContext::new(&problem, &eval).unwrap();
    let (dir, _) = ctx.adjoint_direction().unwrap();
    assert!(dir.r.coeffs().iter().all(|&c| c == 0.0));
    assert!(dir.v.coeffs().iter().all(|&c| c == 0.0));
    assert_eq!(dir.dj, 0.0);
}
