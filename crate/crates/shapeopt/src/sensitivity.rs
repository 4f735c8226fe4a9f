//! Variation systems and the discrete directional derivative of the
//! penalized cost, plus the two descent directions built from it.
//!
//! A perturbation (r, v) of the level function and the control induces a
//! variation q of the state (one Dirichlet solve) and a variation w of each
//! traced orbit (a linear 2x2 recursion per time step, backward Euler). The
//! directional derivative combines those with boundary weight vectors built
//! once per iterate. The shape part of the gradient direction applies the
//! transposed recursion, so the dense step-product matrix is never formed.

use crate::error::{Error, Result};
use crate::fem::assembly::assemble_c1;
use crate::fem::field::FeField;
use crate::fem::space::MAX_LOCAL_NODES;
use crate::fem::sparse::CsrMatrix;
use crate::level::{LevelFunction, TracedBoundary, TracedComponent};
use crate::optimizer::Evaluation;
use crate::problem::{BoundaryCost, GammaRule, Problem};

/// Perturbation pair (R, V) with its predicted derivative.
#[derive(Debug, Clone)]
pub struct DescentDirection {
    /// Perturbation of the level coefficients (state space, all nodes).
    pub r: FeField,
    /// Perturbation of the control coefficients (control space, all nodes).
    pub v: FeField,
    /// Predicted directional derivative of J along (r, v).
    pub dj: f64,
}

/// The two q-independent and q-dependent parts of the derivative.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeBreakdown {
    pub total: f64,
    /// The part depending on the state variation q (the left side of the
    /// adjoint inequality).
    pub q_part: f64,
}

/// Per-component boundary weight vectors, all tied to the orbit partition.
#[derive(Debug, Clone)]
pub struct ComponentVectors {
    /// dt (Lambda_1 + Lambda_2)(t_k), k = 1..m
    pub lam12: Vec<[f64; 2]>,
    /// dt Lambda_4(t_k)
    pub lam4: Vec<[f64; 2]>,
    /// Summation-by-parts form of Lambda_6: entries Lambda_6(t_k) -
    /// Lambda_6(t_{k+1}) for k < m and Lambda_6(t_m) last.
    pub lam6: Vec<[f64; 2]>,
    /// Same structure for Lambda_7.
    pub lam7: Vec<[f64; 2]>,
}

/// Boundary vectors of one iterate: the per-component weights and the
/// f3 vector coupling the cost gradient to the state variation.
#[derive(Debug, Clone)]
pub struct BoundaryVectors {
    pub per_component: Vec<ComponentVectors>,
    /// f3_i = sum_k dt grad_p j . grad^h phi_i (Z_k) |Z'(t_k)|, interior nodes.
    pub f3: Vec<f64>,
}

/// Solve the variation PDE K Q = B1 V + C1 R.
pub fn solve_variation_pde(
    problem: &Problem,
    b1: &CsrMatrix,
    c1: &CsrMatrix,
    r: &FeField,
    v: &FeField,
) -> Result<FeField> {
    let bv = b1.matvec(v.coeffs());
    let cr = c1.matvec(r.coeffs());
    let rhs: Vec<f64> = bv.iter().zip(&cr).map(|(&a, &b)| a + b).collect();
    problem.solve_dirichlet(&rhs)
}

/// Solve the variation ODE along one orbit with the backward Euler scheme.
///
/// Returns W_1..W_m (W_0 = 0). Step k solves
/// (I - dt A(Z_{k+1})) W_{k+1} = W_k + dt (-d2r, d1r)(Z_{k+1})
/// where A collects the recovered second derivatives of g.
pub fn solve_variation_ode(
    g: &LevelFunction,
    comp: &TracedComponent,
    r: &FeField,
) -> Result<Vec<[f64; 2]>> {
    let dr1 = r.recover_derivative(0);
    let dr2 = r.recover_derivative(1);
    solve_variation_ode_with(g, comp, &dr1, &dr2)
}

/// Variation ODE with the recovered derivatives of r supplied by the caller
/// (they are direction-wide, so multi-component sweeps share them).
pub fn solve_variation_ode_with(
    g: &LevelFunction,
    comp: &TracedComponent,
    dr1: &FeField,
    dr2: &FeField,
) -> Result<Vec<[f64; 2]>> {
    let dt = comp.dt();
    let m = comp.steps();
    let space = g.space();
    let mesh = space.mesh();
    let mut w = [0.0f64, 0.0];
    let mut out = Vec::with_capacity(m);
    let mut basis = [0.0; MAX_LOCAL_NODES];
    for k in 0..m {
        let z = comp.point(k + 1);
        let (t, bary) = mesh.locate(z)?;
        space.basis_values(bary, &mut basis);
        let mat = step_matrix(g, t, &basis, dt);
        let f1 = -dr2.value_from_basis(t, &basis);
        let f2 = dr1.value_from_basis(t, &basis);
        let rhs = [w[0] + dt * f1, w[1] + dt * f2];
        w = solve2(mat, rhs, k)?;
        out.push(w);
    }
    Ok(out)
}

/// I - dt A(z) with A = [[-d12, -d22], [d11, d21]] from the recovered
/// second derivatives of g at z.
fn step_matrix(g: &LevelFunction, t: usize, basis: &[f64; MAX_LOCAL_NODES], dt: f64) -> [f64; 4] {
    let [d11, d12, d21, d22] = g.second_from_basis(t, basis);
    [1.0 + dt * d12, dt * d22, -dt * d11, 1.0 - dt * d21]
}

fn solve2(m: [f64; 4], b: [f64; 2], step: usize) -> Result<[f64; 2]> {
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() < 1e-14 {
        return Err(Error::SingularVariationStep { step, det });
    }
    Ok([(b[0] * m[3] - b[1] * m[1]) / det, (b[1] * m[0] - b[0] * m[2]) / det])
}

fn solve2_transpose(m: [f64; 4], b: [f64; 2], step: usize) -> Result<[f64; 2]> {
    solve2([m[0], m[2], m[1], m[3]], b, step)
}

/// Build the boundary weight vectors and f3 for one iterate.
pub fn build_boundary_vectors(
    g: &LevelFunction,
    boundary: &TracedBoundary,
    y: &FeField,
    dy1: &FeField,
    dy2: &FeField,
    cost: &dyn BoundaryCost,
) -> Result<BoundaryVectors> {
    let space = y.space();
    let mesh = space.mesh();
    let hess = y.recover_hessian();
    let mut f3 = vec![0.0f64; space.num_interior()];
    let mut per_component = Vec::with_capacity(boundary.len());
    let mut basis = [0.0; MAX_LOCAL_NODES];
    let floor = g.gradient_floor();

    for comp in &boundary.components {
        let dt = comp.dt();
        let m = comp.steps();
        let speed_guard = 1e-12 * comp.mean_speed();
        let mut lam12 = Vec::with_capacity(m);
        let mut lam4 = Vec::with_capacity(m);
        let mut lam6_raw = Vec::with_capacity(m);
        let mut lam7_raw = Vec::with_capacity(m);
        for k in 1..=m {
            let z = comp.point(k);
            let (t, bary) = mesh.locate(z)?;
            space.basis_values(bary, &mut basis);
            let speed = comp.speed(k);
            if speed <= speed_guard {
                return Err(Error::GradientFloor { x: z[0], y: z[1], norm: speed, floor });
            }
            let grad_g = g.grad_from_basis(t, &basis);
            let ng = (grad_g[0] * grad_g[0] + grad_g[1] * grad_g[1]).sqrt();
            if ng < floor {
                return Err(Error::GradientFloor { x: z[0], y: z[1], norm: ng, floor });
            }
            let normal = [grad_g[0] / ng, grad_g[1] / ng];
            let yv = y.value_from_basis(t, &basis);
            let grad_y = [dy1.value_from_basis(t, &basis), dy2.value_from_basis(t, &basis)];
            let jv = cost.value(z, grad_y, normal);
            let g1 = cost.grad_x(z, grad_y, normal);
            let g2 = cost.grad_p(z, grad_y, normal);
            let h = [
                hess[0].value_from_basis(t, &basis),
                hess[1].value_from_basis(t, &basis),
                hess[2].value_from_basis(t, &basis),
                hess[3].value_from_basis(t, &basis),
            ];
            // Lambda_2 = grad_p j . H(y), with the symmetrized Hessian
            let l2 = [g2[0] * h[0] + g2[1] * h[2], g2[0] * h[1] + g2[1] * h[3]];
            lam12.push([dt * (g1[0] + l2[0]) * speed, dt * (g1[1] + l2[1]) * speed]);
            lam4.push([dt * yv * grad_y[0] * speed, dt * yv * grad_y[1] * speed]);
            // unit tangent along the step ending at t_k
            let prev = comp.point(k - 1);
            let chord = [z[0] - prev[0], z[1] - prev[1]];
            let cl = (chord[0] * chord[0] + chord[1] * chord[1]).sqrt();
            let tang = [chord[0] / cl, chord[1] / cl];
            lam6_raw.push([jv * tang[0], jv * tang[1]]);
            lam7_raw.push([yv * yv * tang[0], yv * yv * tang[1]]);
            // f3 scatter: grad_p j . grad^h phi_i via the recovery matrices
            let w = dt * speed;
            for (l, &gl) in space.triangle_nodes(t).iter().enumerate() {
                let phi = basis[l];
                if phi == 0.0 {
                    continue;
                }
                for axis in 0..2 {
                    let coef = w * g2[axis] * phi;
                    for (col, val) in space.recovery_matrix(axis).row(gl as usize) {
                        if let Some(ic) = space.interior_index(col) {
                            f3[ic] += coef * val;
                        }
                    }
                }
            }
        }
        // summation by parts: entries Lambda(t_k) - Lambda(t_{k+1}), last entry Lambda(t_m)
        let diff = |raw: &Vec<[f64; 2]>| -> Vec<[f64; 2]> {
            (0..m)
                .map(|i| {
                    if i + 1 < m {
                        [raw[i][0] - raw[i + 1][0], raw[i][1] - raw[i + 1][1]]
                    } else {
                        raw[i]
                    }
                })
                .collect()
        };
        per_component.push(ComponentVectors {
            lam12,
            lam4,
            lam6: diff(&lam6_raw),
            lam7: diff(&lam7_raw),
        });
    }
    Ok(BoundaryVectors { per_component, f3 })
}

/// The discrete directional derivative: boundary weights against the orbit
/// variations plus the q-coupled terms.
pub fn directional_derivative(
    vectors: &BoundaryVectors,
    nz: &CsrMatrix,
    y: &FeField,
    q: &FeField,
    w: &[Vec<[f64; 2]>],
    epsilon: f64,
) -> DerivativeBreakdown {
    assert_eq!(vectors.per_component.len(), w.len());
    let mut total = 0.0;
    for (cv, wc) in vectors.per_component.iter().zip(w) {
        assert_eq!(cv.lam12.len(), wc.len());
        let mut s = 0.0;
        for k in 0..wc.len() {
            let combo = [
                cv.lam12[k][0] + 2.0 / epsilon * cv.lam4[k][0] + cv.lam6[k][0]
                    + cv.lam7[k][0] / epsilon,
                cv.lam12[k][1] + 2.0 / epsilon * cv.lam4[k][1] + cv.lam6[k][1]
                    + cv.lam7[k][1] / epsilon,
            ];
            s += combo[0] * wc[k][0] + combo[1] * wc[k][1];
        }
        total += s;
    }
    let f3q: f64 = vectors.f3.iter().zip(q.coeffs()).map(|(&a, &b)| a * b).sum();
    let ynq = 2.0 / epsilon * nz.quadratic_form(y.coeffs(), q.coeffs());
    let q_part = f3q + ynq;
    DerivativeBreakdown { total: total + q_part, q_part }
}

/// Everything the derivative and the descent directions need at one iterate.
pub struct SensitivityContext<'a> {
    pub problem: &'a Problem,
    pub eval: &'a Evaluation,
    pub c1: CsrMatrix,
    pub vectors: BoundaryVectors,
    /// f3 + (2/eps) N Y, the right-hand side of the simplified adjoint system.
    pub adjoint_rhs: Vec<f64>,
}

impl<'a> SensitivityContext<'a> {
    pub fn new(problem: &'a Problem, eval: &'a Evaluation) -> Result<Self> {
        let c1 = assemble_c1(eval.level.field(), &eval.control);
        let vectors = build_boundary_vectors(
            &eval.level,
            &eval.boundary,
            &eval.state,
            &eval.dy1,
            &eval.dy2,
            problem.spec.cost.as_ref(),
        )?;
        let ny = eval.nz.matvec(eval.state.coeffs());
        let eps = problem.spec.epsilon;
        let adjoint_rhs: Vec<f64> =
            vectors.f3.iter().zip(&ny).map(|(&f, &n)| f + 2.0 / eps * n).collect();
        Ok(SensitivityContext { problem, eval, c1, vectors, adjoint_rhs })
    }

    /// Orbit variations W for every component under the perturbation r.
    pub fn orbit_variations(&self, r: &FeField) -> Result<Vec<Vec<[f64; 2]>>> {
        let dr1 = r.recover_derivative(0);
        let dr2 = r.recover_derivative(1);
        self.eval
            .boundary
            .components
            .iter()
            .map(|c| solve_variation_ode_with(&self.eval.level, c, &dr1, &dr2))
            .collect()
    }

    /// Directional derivative of J at the iterate along (r, v).
    pub fn derivative(&self, r: &FeField, v: &FeField) -> Result<DerivativeBreakdown> {
        let q = solve_variation_pde(self.problem, &self.eval.b1, &self.c1, r, v)?;
        let w = self.orbit_variations(r)?;
        Ok(directional_derivative(
            &self.vectors,
            &self.eval.nz,
            &self.eval.state,
            &q,
            &w,
            self.problem.spec.epsilon,
        ))
    }

    /// Gradient-type direction: the negative of the derivative's Riesz
    /// representer in the coefficient inner product, so that
    /// dJ = -|R|^2 - |V|^2.
    pub fn gradient_direction(&self) -> Result<DescentDirection> {
        let s = self.problem.solver.solve(&self.adjoint_rhs)?;
        // V* = -B1^T s
        let v: Vec<f64> = self.eval.b1.matvec_transpose(&s).iter().map(|&x| -x).collect();
        // R* = -C1^T s - (adjoint sweep of the orbit recursions)
        let mut r: Vec<f64> = self.c1.matvec_transpose(&s).iter().map(|&x| -x).collect();
        let eps = self.problem.spec.epsilon;
        for (comp, cv) in self.eval.boundary.components.iter().zip(&self.vectors.per_component) {
            let m = comp.steps();
            let combo: Vec<[f64; 2]> = (0..m)
                .map(|k| {
                    [
                        cv.lam12[k][0] + 2.0 / eps * cv.lam4[k][0] + cv.lam6[k][0]
                            + cv.lam7[k][0] / eps,
                        cv.lam12[k][1] + 2.0 / eps * cv.lam4[k][1] + cv.lam6[k][1]
                            + cv.lam7[k][1] / eps,
                    ]
                })
                .collect();
            let grad = self.orbit_adjoint_apply(comp, &combo)?;
            for (ri, gi) in r.iter_mut().zip(&grad) {
                *ri -= gi;
            }
        }
        let dj = -(r.iter().map(|x| x * x).sum::<f64>() + v.iter().map(|x| x * x).sum::<f64>());
        Ok(DescentDirection {
            r: FeField::from_coeffs(self.problem.state_space.clone(), r),
            v: FeField::from_coeffs(self.problem.control_space.clone(), v),
            dj,
        })
    }

    /// Apply the transpose of the orbit variation map to per-step weights:
    /// returns sum_k N2(k)^T M(k)^T mu_{k+1} over the state coefficients.
    fn orbit_adjoint_apply(
        &self,
        comp: &TracedComponent,
        weights: &[[f64; 2]],
    ) -> Result<Vec<f64>> {
        let g = &self.eval.level;
        let space = g.space();
        let mesh = space.mesh();
        let dt = comp.dt();
        let m = comp.steps();
        assert_eq!(weights.len(), m);

        // backward sweep: mu_m = c_m, mu_k = c_k + M(k)^T mu_{k+1};
        // ws[k] = M(k)^T mu_{k+1} for k = m-1 .. 0
        let mut ws = vec![[0.0f64; 2]; m];
        let mut basis = [0.0; MAX_LOCAL_NODES];
        let mut mu = weights[m - 1];
        for k in (0..m).rev() {
            let z = comp.point(k + 1);
            let (t, bary) = mesh.locate(z)?;
            space.basis_values(bary, &mut basis);
            let mat = step_matrix(g, t, &basis, dt);
            // x = M(k)^T mu_{k+1} solves (I - dt A)^T x = mu_{k+1}
            let x = solve2_transpose(mat, mu, k)?;
            ws[k] = x;
            if k > 0 {
                mu = [weights[k - 1][0] + x[0], weights[k - 1][1] + x[1]];
            }
        }

        // forward scatter: grad += N2(k)^T ws[k],
        // N2(k)^T x = dt (Pi1^T Phi(Z_{k+1}) x2 - Pi2^T Phi(Z_{k+1}) x1)
        let mut grad = vec![0.0f64; space.num_nodes()];
        for (k, x) in ws.iter().enumerate() {
            let z = comp.point(k + 1);
            let (t, bary) = mesh.locate(z)?;
            space.basis_values(bary, &mut basis);
            for (l, &gl) in space.triangle_nodes(t).iter().enumerate() {
                let phi = basis[l];
                if phi == 0.0 {
                    continue;
                }
                let c1 = dt * x[1] * phi;
                for (col, val) in space.recovery_matrix(0).row(gl as usize) {
                    grad[col] += c1 * val;
                }
                let c2 = dt * x[0] * phi;
                for (col, val) in space.recovery_matrix(1).row(gl as usize) {
                    grad[col] -= c2 * val;
                }
            }
        }
        Ok(grad)
    }

    /// Simplified adjoint direction: solve K P = f3 + (2/eps) N Y, then
    /// v = -p and r = -gamma p u interpolated at the state nodes.
    pub fn adjoint_direction(&self) -> Result<(DescentDirection, DerivativeBreakdown)> {
        let p_int = self.problem.solver.solve(&self.adjoint_rhs)?;
        let p = FeField::from_interior_coeffs(self.problem.state_space.clone(), p_int);

        let control_space = &self.problem.control_space;
        let v: Vec<f64> =
            (0..control_space.num_nodes()).map(|i| -p.coeff_at_node(i)).collect();

        // r_raw = -(p u) interpolated at the state nodes
        let u_at_state = interpolate_at_state_nodes(&self.eval.control, &p);
        let state_space = &self.problem.state_space;
        let mut r_raw: Vec<f64> =
            (0..state_space.num_nodes()).map(|i| -p.coeff_at_node(i) * u_at_state[i]).collect();
        let sup = r_raw.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let gamma = match self.problem.spec.gamma {
            GammaRule::InverseSupNorm => {
                if sup > 0.0 {
                    1.0 / sup
                } else {
                    1.0
                }
            }
            GammaRule::One => 1.0,
        };
        for x in &mut r_raw {
            *x *= gamma;
        }

        let r = FeField::from_coeffs(state_space.clone(), r_raw);
        let v = FeField::from_coeffs(control_space.clone(), v);
        let breakdown = self.derivative(&r, &v)?;
        Ok((DescentDirection { r, v, dj: breakdown.total }, breakdown))
    }
}

/// Values of a control-space field at every node of the state space.
///
/// Both spaces share the mesh, so each state node is evaluated inside a
/// containing triangle with the control basis; the value is independent of
/// the choice of triangle.
fn interpolate_at_state_nodes(u: &FeField, state_like: &FeField) -> Vec<f64> {
    let state_space = state_like.space();
    let control_space = u.space();
    if std::sync::Arc::ptr_eq(state_space, control_space) {
        return (0..state_space.num_nodes()).map(|i| u.coeff_at_node(i)).collect();
    }
    let mesh = state_space.mesh();
    let mut out = vec![f64::NAN; state_space.num_nodes()];
    let mut basis = [0.0; MAX_LOCAL_NODES];
    for t in 0..mesh.num_triangles() {
        for (l, &gl) in state_space.triangle_nodes(t).iter().enumerate() {
            let gi = gl as usize;
            if !out[gi].is_nan() {
                continue;
            }
            let bary = state_space.local_node_bary(l);
            control_space.basis_values(bary, &mut basis);
            out[gi] = u.value_from_basis(t, &basis);
        }
    }
    out
}
