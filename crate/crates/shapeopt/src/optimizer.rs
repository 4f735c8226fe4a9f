//! The outer descent loop: objective evaluation, backtracking line search,
//! constraint projection, stopping tests, and the iteration history.

use crate::error::{Error, Result};
use crate::fem::field::FeField;
use crate::fem::space::MAX_LOCAL_NODES;
use crate::fem::sparse::CsrMatrix;
use crate::level::{assemble_nz, trace_boundary, LevelFunction, TracedBoundary};
use crate::problem::{BoundaryCost, DirectionRule, Problem};
use crate::sensitivity::{DescentDirection, SensitivityContext};

/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Backtracking shrink factor.
pub const BACKTRACK_SHRINK: f64 = 0.5;
/// Trial budget per line search.
pub const MAX_LINE_SEARCH_TRIALS: usize = 20;

/// The two boundary integrals and the penalized total J = t1 + t2 / eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub t1: f64,
    pub t2: f64,
    pub j: f64,
}

/// Everything computed at one iterate (G, U).
pub struct Evaluation {
    pub level: LevelFunction,
    pub control: FeField,
    pub boundary: TracedBoundary,
    pub b1: CsrMatrix,
    /// The state Y (zero trace).
    pub state: FeField,
    /// Recovered gradient fields of the state.
    pub dy1: FeField,
    pub dy2: FeField,
    pub nz: CsrMatrix,
    pub breakdown: ObjectiveBreakdown,
}

/// Evaluate the penalized objective at (g, u).
///
/// Fails when the level function violates the outer-boundary sign condition,
/// when its zero set is empty or cannot be traced, or when the state solve
/// does not converge. Inside the line search those failures reject the trial
/// step instead of aborting.
pub fn evaluate_objective(problem: &Problem, g: FeField, u: FeField) -> Result<Evaluation> {
    let level = LevelFunction::new(g)?;
    let boundary = trace_boundary(&level, &problem.spec.trace)?;
    if boundary.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let b1 = problem.assemble_b1(level.field());
    let state = problem.solve_state(&b1, &u)?;
    let dy1 = state.recover_derivative(0);
    let dy2 = state.recover_derivative(1);
    let nz = assemble_nz(&boundary, &problem.state_space)?;
    let t2 = nz.quadratic_form(state.coeffs(), state.coeffs());
    let t1 =
        boundary_cost_integral(&level, &boundary, &dy1, &dy2, problem.spec.cost.as_ref())?;
    let j = t1 + t2 / problem.spec.epsilon;
    Ok(Evaluation {
        level,
        control: u,
        boundary,
        b1,
        state,
        dy1,
        dy2,
        nz,
        breakdown: ObjectiveBreakdown { t1, t2, j },
    })
}

/// t1: the boundary cost integrated along every traced component with the
/// right Riemann rule.
pub fn boundary_cost_integral(
    level: &LevelFunction,
    boundary: &TracedBoundary,
    dy1: &FeField,
    dy2: &FeField,
    cost: &dyn BoundaryCost,
) -> Result<f64> {
    let space = dy1.space();
    let mesh = space.mesh();
    let floor = level.gradient_floor();
    let mut basis = [0.0; MAX_LOCAL_NODES];
    let mut total = 0.0;
    for comp in &boundary.components {
        let mut s = 0.0;
        for k in 1..=comp.steps() {
            let z = comp.point(k);
            let (t, bary) = mesh.locate(z)?;
            space.basis_values(bary, &mut basis);
            let grad_g = level.grad_from_basis(t, &basis);
            let ng = (grad_g[0] * grad_g[0] + grad_g[1] * grad_g[1]).sqrt();
            if ng < floor {
                return Err(Error::GradientFloor { x: z[0], y: z[1], norm: ng, floor });
            }
            let normal = [grad_g[0] / ng, grad_g[1] / ng];
            let grad_y = [dy1.value_from_basis(t, &basis), dy2.value_from_basis(t, &basis)];
            s += comp.dt() * cost.value(z, grad_y, normal) * comp.speed(k);
        }
        total += s;
    }
    Ok(total)
}

/// Objective at a new control with the geometry (orbits, B1, N) frozen at an
/// existing evaluation. J is a quadratic function of the control here.
pub fn objective_with_frozen_geometry(
    problem: &Problem,
    eval: &Evaluation,
    u: &FeField,
) -> Result<ObjectiveBreakdown> {
    let state = problem.solve_state(&eval.b1, u)?;
    let dy1 = state.recover_derivative(0);
    let dy2 = state.recover_derivative(1);
    let t2 = eval.nz.quadratic_form(state.coeffs(), state.coeffs());
    let t1 = boundary_cost_integral(
        &eval.level,
        &eval.boundary,
        &dy1,
        &dy2,
        problem.spec.cost.as_ref(),
    )?;
    Ok(ObjectiveBreakdown { t1, t2, j: t1 + t2 / problem.spec.epsilon })
}

/// One accepted step of the backtracking line search.
pub struct AcceptedStep {
    pub lambda: f64,
    pub evaluation: Evaluation,
    pub trials: usize,
}

/// Backtracking line search with the Armijo condition
/// J(lambda) <= J0 + c lambda dJ. Trial evaluations that fail to trace are
/// treated as +infinity and rejected. Returns None when no decrease is found
/// within the trial budget.
pub fn line_search(
    problem: &Problem,
    current: &Evaluation,
    direction: &DescentDirection,
    lambda_init: f64,
) -> Option<AcceptedStep> {
    debug_assert!(direction.dj < 0.0);
    let j0 = current.breakdown.j;
    let mut lambda = lambda_init;
    for trial in 0..MAX_LINE_SEARCH_TRIALS {
        let mut g = current.level.field().clone();
        for (c, d) in g.coeffs_mut().iter_mut().zip(direction.r.coeffs()) {
            *c += lambda * d;
        }
        problem.enforce_constraints(&mut g);
        let mut u = current.control.clone();
        for (c, d) in u.coeffs_mut().iter_mut().zip(direction.v.coeffs()) {
            *c += lambda * d;
        }
        if let Ok(eval) = evaluate_objective(problem, g, u) {
            if eval.breakdown.j <= j0 + ARMIJO_C * lambda * direction.dj {
                return Some(AcceptedStep { lambda, evaluation: eval, trials: trial + 1 });
            }
        }
        lambda *= BACKTRACK_SHRINK;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// |J_{k+1} - J_k| fell below the tolerance.
    Converged,
    /// The predicted derivative vanished.
    Stationary,
    /// No decreasing step was found.
    LineSearchStall,
    MaxIterations,
}

#[derive(Debug, Clone, Default)]
pub struct IterationDiagnostics {
    pub norm_r: f64,
    pub norm_v: f64,
    /// (step count m, period T) per traced component.
    pub per_component: Vec<(usize, f64)>,
    /// Left side of the adjoint inequality, when the adjoint direction ran.
    pub adjoint_q_part: Option<f64>,
    /// |g(x0)| at the monitor point, when configured.
    pub monitor_level: Option<f64>,
    pub line_search_trials: usize,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub t1: f64,
    pub t2: f64,
    pub j: f64,
    /// Step length taken from this iterate (0 on the terminal row).
    pub lambda: f64,
    pub components: usize,
    /// Predicted directional derivative at this iterate.
    pub dj: f64,
    pub diag: IterationDiagnostics,
}

pub struct RunResult {
    pub history: Vec<IterationRecord>,
    /// Traced boundary of each recorded iterate, aligned with `history`.
    pub boundaries: Vec<TracedBoundary>,
    pub status: RunStatus,
    pub final_eval: Evaluation,
}

impl RunResult {
    pub fn initial(&self) -> &IterationRecord {
        &self.history[0]
    }

    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("history is never empty")
    }
}

/// The descent loop. Terminates on the |dJ| tolerance, stationarity, a line
/// search stall, or the iteration cap; every visited iterate gets a record.
pub fn run(problem: &Problem, g0: FeField, u0: FeField) -> Result<RunResult> {
    let mut g = g0;
    problem.enforce_constraints(&mut g);
    let mut eval = evaluate_objective(problem, g, u0)?;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut boundaries: Vec<TracedBoundary> = Vec::new();
    let mut lambda_prev: Option<f64> = None;
    let mut k = 0usize;
    let mut stop: Option<RunStatus> = None;

    let status = loop {
        let ctx = SensitivityContext::new(problem, &eval)?;
        let (direction, q_part) = match problem.spec.direction {
            DirectionRule::Adjoint => {
                let (d, breakdown) = ctx.adjoint_direction()?;
                (d, Some(breakdown.q_part))
            }
            DirectionRule::Gradient => (ctx.gradient_direction()?, None),
        };
        let mut diag = IterationDiagnostics {
            norm_r: direction.r.coeffs().iter().map(|x| x * x).sum::<f64>().sqrt(),
            norm_v: direction.v.coeffs().iter().map(|x| x * x).sum::<f64>().sqrt(),
            per_component: eval
                .boundary
                .components
                .iter()
                .map(|c| (c.steps(), c.period()))
                .collect(),
            adjoint_q_part: q_part,
            monitor_level: problem
                .spec
                .monitor_point
                .and_then(|x0| eval.level.value_at(x0).ok())
                .map(f64::abs),
            line_search_trials: 0,
        };

        boundaries.push(eval.boundary.clone());
        if let Some(status) = stop {
            history.push(record(k, &eval, 0.0, direction.dj, diag));
            break status;
        }
        if direction.dj == 0.0 {
            history.push(record(k, &eval, 0.0, 0.0, diag));
            break RunStatus::Stationary;
        }
        if direction.dj > 0.0 {
            history.push(record(k, &eval, 0.0, direction.dj, diag));
            break RunStatus::LineSearchStall;
        }
        if k >= problem.spec.max_iterations {
            history.push(record(k, &eval, 0.0, direction.dj, diag));
            break RunStatus::MaxIterations;
        }

        // warm start from the previous step; the first trial length comes
        // from the Cauchy scale J / |dJ| since the direction is unnormalized
        let lambda_init = match lambda_prev {
            Some(l) => 2.0 * l,
            None => (eval.breakdown.j / direction.dj.abs()).min(1.0),
        };
        match line_search(problem, &eval, &direction, lambda_init) {
            None => {
                history.push(record(k, &eval, 0.0, direction.dj, diag));
                break RunStatus::LineSearchStall;
            }
            Some(step) => {
                diag.line_search_trials = step.trials;
                history.push(record(k, &eval, step.lambda, direction.dj, diag));
                if (eval.breakdown.j - step.evaluation.breakdown.j).abs() < problem.spec.tol {
                    stop = Some(RunStatus::Converged);
                }
                eval = step.evaluation;
                lambda_prev = Some(step.lambda);
                k += 1;
            }
        }
    };

    Ok(RunResult { history, boundaries, status, final_eval: eval })
}

fn record(
    k: usize,
    eval: &Evaluation,
    lambda: f64,
    dj: f64,
    diag: IterationDiagnostics,
) -> IterationRecord {
    IterationRecord {
        k,
        t1: eval.breakdown.t1,
        t2: eval.breakdown.t2,
        j: eval.breakdown.j,
        lambda,
        components: eval.boundary.len(),
        dj,
        diag,
    }
}
