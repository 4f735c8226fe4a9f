//! Problem data: source and target fields, the boundary cost functional with
//! its gradients, and the assembled per-mesh problem context.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_b1, assemble_load, assemble_stiffness};
use crate::fem::field::FeField;
use crate::fem::mesh::{Rect, Triangulation};
use crate::fem::solver::DirichletSolver;
use crate::fem::space::FeSpace;
use crate::fem::sparse::CsrMatrix;
use crate::level::TraceOptions;

/// Closed-form source term of the state equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceField {
    Const(f64),
}

impl SourceField {
    pub fn value(&self, _p: [f64; 2]) -> f64 {
        match *self {
            SourceField::Const(c) => c,
        }
    }
}

/// Closed-form boundary target for the normal-derivative misfit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetField {
    Const(f64),
}

impl TargetField {
    pub fn value(&self, _p: [f64; 2]) -> f64 {
        match *self {
            TargetField::Const(c) => c,
        }
    }

    pub fn gradient(&self, _p: [f64; 2]) -> [f64; 2] {
        match *self {
            TargetField::Const(_) => [0.0, 0.0],
        }
    }
}

/// Boundary cost density j(x, grad y) with its two gradients.
///
/// The outward normal at the evaluation point is supplied by the caller,
/// since costs built on the normal derivative need it.
pub trait BoundaryCost: Send + Sync {
    fn value(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> f64;
    /// Gradient with respect to the point argument.
    fn grad_x(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> [f64; 2];
    /// Gradient with respect to the state-gradient argument.
    fn grad_p(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> [f64; 2];
}

/// j = (dy/dn - delta)^2 / 2, the normal-derivative misfit.
///
/// The point gradient differentiates only the explicit x-dependence through
/// the target, not the normal field.
#[derive(Debug, Clone)]
pub struct NormalDerivativeMisfit {
    pub target: TargetField,
}

impl BoundaryCost for NormalDerivativeMisfit {
    fn value(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> f64 {
        let dn = grad_y[0] * normal[0] + grad_y[1] * normal[1];
        let miss = dn - self.target.value(x);
        0.5 * miss * miss
    }

    fn grad_x(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> [f64; 2] {
        let dn = grad_y[0] * normal[0] + grad_y[1] * normal[1];
        let miss = dn - self.target.value(x);
        let gd = self.target.gradient(x);
        [-miss * gd[0], -miss * gd[1]]
    }

    fn grad_p(&self, x: [f64; 2], grad_y: [f64; 2], normal: [f64; 2]) -> [f64; 2] {
        let dn = grad_y[0] * normal[0] + grad_y[1] * normal[1];
        let miss = dn - self.target.value(x);
        [miss * normal[0], miss * normal[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionRule {
    /// Simplified adjoint direction r = -gamma p u, v = -p.
    Adjoint,
    /// Gradient-type direction with the predicted derivative
    /// -|R|^2 - |V|^2.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaRule {
    /// gamma = 1 / sup-norm of the raw shape direction (1 when it vanishes).
    InverseSupNorm,
    One,
}

/// Optional geometric constraints on the level function.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    /// Nodes inside this rectangle keep g <= 0 (the domain must cover it).
    pub keep_inside: Option<Rect>,
    /// Nodes on this segment keep g = 0 (the boundary must pass through it).
    pub pin_segment: Option<([f64; 2], [f64; 2])>,
}

/// Everything that defines one optimization problem, mesh aside.
pub struct ProblemSpec {
    pub rect: Rect,
    pub source: SourceField,
    pub cost: Arc<dyn BoundaryCost>,
    pub epsilon: f64,
    pub tol: f64,
    pub trace: TraceOptions,
    pub direction: DirectionRule,
    pub gamma: GammaRule,
    pub max_iterations: usize,
    pub constraints: Constraints,
    /// Point whose level value is reported each iteration (never enforced).
    pub monitor_point: Option<[f64; 2]>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if !(self.trace.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(())
    }
}

/// Assembled once per mesh: spaces, stiffness, factorization, load.
pub struct Problem {
    pub spec: ProblemSpec,
    pub mesh: Arc<Triangulation>,
    pub state_space: Arc<FeSpace>,
    pub control_space: Arc<FeSpace>,
    pub stiffness: CsrMatrix,
    pub solver: DirichletSolver,
    /// F_i = int f phi_i over interior state nodes.
    pub load: Vec<f64>,
    clamp_nodes: Vec<usize>,
    pin_nodes: Vec<usize>,
}

impl Problem {
    pub fn new(spec: ProblemSpec, mesh: Arc<Triangulation>, control_degree: u8) -> Result<Self> {
        spec.validate()?;
        let state_space = Arc::new(FeSpace::new(mesh.clone(), 3)?);
        let control_space = if control_degree == 3 {
            state_space.clone()
        } else {
            Arc::new(FeSpace::new(mesh.clone(), control_degree)?)
        };
        let stiffness = assemble_stiffness(&state_space);
        stiffness.symmetry_check()?;
        let solver = DirichletSolver::new(&stiffness)?;
        let source = spec.source;
        let load = assemble_load(&state_space, |p| source.value(p));

        let mut clamp_nodes = Vec::new();
        if let Some(rect) = spec.constraints.keep_inside {
            for i in 0..state_space.num_nodes() {
                if rect.contains(state_space.node(i), 0.0) {
                    clamp_nodes.push(i);
                }
            }
        }
        let mut pin_nodes = Vec::new();
        if let Some((a, b)) = spec.constraints.pin_segment {
            let scale = mesh.bbox().width().max(mesh.bbox().height());
            for i in 0..state_space.num_nodes() {
                if distance_to_segment(state_space.node(i), a, b) <= 1e-9 * scale {
                    pin_nodes.push(i);
                }
            }
        }

        Ok(Problem {
            spec,
            mesh,
            state_space,
            control_space,
            stiffness,
            solver,
            load,
            clamp_nodes,
            pin_nodes,
        })
    }

    /// Solve K Y = F + B1 U and verify the residual.
    pub fn solve_state(&self, b1: &CsrMatrix, u: &FeField) -> Result<FeField> {
        let bu = b1.matvec(u.coeffs());
        let rhs: Vec<f64> = self.load.iter().zip(&bu).map(|(&f, &b)| f + b).collect();
        self.solve_dirichlet(&rhs)
    }

    /// Solve K X = rhs over interior nodes and check the residual against
    /// the solver tolerance.
    pub fn solve_dirichlet(&self, rhs: &[f64]) -> Result<FeField> {
        let x = self.solver.solve(rhs)?;
        let kx = self.stiffness.matvec(&x);
        let norm_rhs = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = kx
            .iter()
            .zip(rhs)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if norm_rhs > 0.0 && res > 1e-8 * norm_rhs {
            return Err(Error::SolverFailure { residual: res / norm_rhs });
        }
        Ok(FeField::from_interior_coeffs(self.state_space.clone(), x))
    }

    /// Assemble B1 for a level field against the control space.
    pub fn assemble_b1(&self, g: &FeField) -> CsrMatrix {
        assemble_b1(g, &self.control_space)
    }

    /// Nodal projection onto the constraint set: clamp to nonpositive values
    /// on the covered region, pin to zero on the pinned manifold.
    pub fn enforce_constraints(&self, g: &mut FeField) {
        for &i in &self.clamp_nodes {
            let c = &mut g.coeffs_mut()[i];
            if *c > 0.0 {
                *c = 0.0;
            }
        }
        for &i in &self.pin_nodes {
            g.coeffs_mut()[i] = 0.0;
        }
    }

    pub fn has_constraints(&self) -> bool {
        !self.clamp_nodes.is_empty() || !self.pin_nodes.is_empty()
    }
}

/// Fictitious control that reproduces the translated-disk solution for a
/// constant source.
///
/// For g = |x-c|^2 - r^2 and source f, the state a(|x-c|^2 - r^2) with
/// a = -f/4 solves the equation inside the disk. The control continues that
/// state by a C^2 radial blend to zero between `rho1` and `rho2` and cancels
/// the source beyond, so the penalized state has a near-zero trace on the
/// disk boundary. Requires r < rho1 < rho2.
pub fn disk_control(center: [f64; 2], r: f64, rho1: f64, rho2: f64, f: f64, p: [f64; 2]) -> f64 {
    let a = -f / 4.0;
    let rho = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
    let g = rho * rho - r * r;
    if g <= 0.0 {
        return 0.0;
    }
    // quintic step from 1 to 0 on [rho1, rho2]
    let s = ((rho - rho1) / (rho2 - rho1)).clamp(0.0, 1.0);
    let chi = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let dchi = -(30.0 * s.powi(4) - 60.0 * s.powi(3) + 30.0 * s * s) / (rho2 - rho1);
    let ddchi =
        -(120.0 * s.powi(3) - 180.0 * s * s + 60.0 * s) / ((rho2 - rho1) * (rho2 - rho1));
    // laplacian of a (rho^2 - r^2) chi(rho) in polar coordinates
    let lap = a * (4.0 * chi + (4.0 * rho + g / rho) * dchi + g * ddchi);
    (-f - lap) / (g * g)
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}
