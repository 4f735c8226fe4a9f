//! Geometry of the implicit domain: level functions, Hamiltonian boundary
//! tracing with period detection, curve quadrature, outward normals, and the
//! boundary mass matrix.
//!
//! The boundary of the domain `{g < 0}` is parametrized by closed orbits of
//! the Hamiltonian system `x' = (-d2 g, d1 g)` driven by the recovered
//! gradient of the level function. One orbit is traced per connected
//! component of the zero set; the computed period is the first return time.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::field::FeField;
use crate::fem::space::{FeSpace, MAX_LOCAL_NODES};
use crate::fem::sparse::CsrMatrix;

/// Relative gradient floor: tracing aborts when |grad g| falls below this
/// fraction of its maximum over the domain.
pub const GRADIENT_FLOOR_REL: f64 = 1e-8;

/// Level function with cached recovered derivatives.
///
/// The field must be a degree-3 field spanning the whole space, positive at
/// every boundary node of the hold-all (the zero set may not touch the outer
/// boundary).
#[derive(Debug, Clone)]
pub struct LevelFunction {
    field: FeField,
    d1: FeField,
    d2: FeField,
    /// dij = recovered d_i of (recovered d_j of g); not symmetrized, the
    /// variation system uses the two mixed recoveries separately
    d11: FeField,
    d12: FeField,
    d21: FeField,
    d22: FeField,
    max_grad: f64,
}

impl LevelFunction {
    pub fn new(field: FeField) -> Result<Self> {
        let space = field.space();
        for i in 0..space.num_nodes() {
            if space.is_boundary_node(i) {
                let v = field.coeff_at_node(i);
                if !(v > 0.0) {
                    return Err(Error::BoundarySignViolation { node: i, value: v });
                }
            }
        }
        Ok(Self::new_unchecked(field))
    }

    /// Builds the caches without the outer-boundary positivity check.
    ///
    /// Intended for diagnostics such as tracing the zero level set of a
    /// state field, which vanishes on the outer boundary.
    pub fn new_unchecked(field: FeField) -> Self {
        assert_eq!(field.space().degree(), 3, "level functions live in the cubic space");
        let d1 = field.recover_derivative(0);
        let d2 = field.recover_derivative(1);
        let d11 = d1.recover_derivative(0);
        let d21 = d1.recover_derivative(1);
        let d12 = d2.recover_derivative(0);
        let d22 = d2.recover_derivative(1);
        let mut max_grad = 0.0f64;
        for i in 0..field.space().num_nodes() {
            let gx = d1.coeff_at_node(i);
            let gy = d2.coeff_at_node(i);
            max_grad = max_grad.max((gx * gx + gy * gy).sqrt());
        }
        LevelFunction { field, d1, d2, d11, d12, d21, d22, max_grad }
    }

    pub fn field(&self) -> &FeField {
        &self.field
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        self.field.space()
    }

    pub fn grad_fields(&self) -> (&FeField, &FeField) {
        (&self.d1, &self.d2)
    }

    pub fn max_grad(&self) -> f64 {
        self.max_grad
    }

    pub fn gradient_floor(&self) -> f64 {
        GRADIENT_FLOOR_REL * self.max_grad
    }

    pub fn value_at(&self, p: [f64; 2]) -> Result<f64> {
        self.field.evaluate(p)
    }

    /// Recovered gradient at a point.
    pub fn grad_at(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let (t, bary) = self.space().mesh().locate(p)?;
        let mut basis = [0.0; MAX_LOCAL_NODES];
        self.space().basis_values(bary, &mut basis);
        Ok([self.d1.value_from_basis(t, &basis), self.d2.value_from_basis(t, &basis)])
    }

    /// Recovered second derivatives at a point: [d11, d12, d21, d22] where
    /// dij applies recovery along axis i to the recovered j-derivative.
    pub fn second_at(&self, p: [f64; 2]) -> Result<[f64; 4]> {
        let (t, bary) = self.space().mesh().locate(p)?;
        let mut basis = [0.0; MAX_LOCAL_NODES];
        self.space().basis_values(bary, &mut basis);
        Ok(self.second_from_basis(t, &basis))
    }

    /// Recovered gradient from precomputed basis values of triangle `t`.
    pub fn grad_from_basis(&self, t: usize, basis: &[f64; MAX_LOCAL_NODES]) -> [f64; 2] {
        [self.d1.value_from_basis(t, basis), self.d2.value_from_basis(t, basis)]
    }

    /// Recovered second derivatives from precomputed basis values.
    pub fn second_from_basis(&self, t: usize, basis: &[f64; MAX_LOCAL_NODES]) -> [f64; 4] {
        [
            self.d11.value_from_basis(t, basis),
            self.d12.value_from_basis(t, basis),
            self.d21.value_from_basis(t, basis),
            self.d22.value_from_basis(t, basis),
        ]
    }

    /// Hamiltonian velocity (-d2 g, d1 g), checking the gradient floor.
    fn velocity(&self, p: [f64; 2], step: usize) -> Result<[f64; 2]> {
        let grad = self.grad_at(p).map_err(|e| match e {
            Error::PointOutsideDomain(x, y) => Error::OrbitEscaped { step, x, y },
            other => other,
        })?;
        let norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        let floor = self.gradient_floor();
        if norm < floor {
            return Err(Error::GradientFloor { x: p[0], y: p[1], norm, floor });
        }
        Ok([-grad[1], grad[0]])
    }
}

/// Outward unit normal of the domain `{g < 0}` at a point: grad g normalized.
pub fn outward_normal(g: &LevelFunction, p: [f64; 2]) -> Result<[f64; 2]> {
    let grad = g.grad_at(p)?;
    let norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    let floor = g.gradient_floor();
    if norm < floor {
        return Err(Error::GradientFloor { x: p[0], y: p[1], norm, floor });
    }
    Ok([grad[0] / norm, grad[1] / norm])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ForwardEuler,
    RungeKutta4,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub dt: f64,
    pub scheme: Scheme,
    /// Earliest step index at which the orbit may close.
    pub m_min: usize,
    /// Hard cap on the step count; exceeding it is an error.
    pub max_steps: usize,
    /// Closure radius in units of the local step length dt * |grad g(x0)|.
    pub closure_factor: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            dt: 1e-3,
            scheme: Scheme::ForwardEuler,
            m_min: 10,
            max_steps: 10_000_000,
            closure_factor: 5.0,
        }
    }
}

/// One closed discrete orbit: points Z_0..Z_m on the uniform partition of
/// [0, T] with T = m dt.
#[derive(Debug, Clone)]
pub struct TracedComponent {
    start: [f64; 2],
    dt: f64,
    /// Z_0..Z_m
    points: Vec<[f64; 2]>,
    /// speeds[k-1] = |Z_k - Z_{k-1}| / dt, the curve speed at t_k, k = 1..m
    speeds: Vec<f64>,
}

impl TracedComponent {
    pub fn start(&self) -> [f64; 2] {
        self.start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps m; the partition is t_0..t_m.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn period(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Z(t_k)
    pub fn point(&self, k: usize) -> [f64; 2] {
        self.points[k]
    }

    /// |Z'(t_k)| for k = 1..m (the speed on the step ending at t_k).
    pub fn speed(&self, k: usize) -> f64 {
        self.speeds[k - 1]
    }

    pub fn mean_speed(&self) -> f64 {
        self.speeds.iter().sum::<f64>() / self.speeds.len() as f64
    }

    /// Right Riemann sum of `integrand(t_k, Z_k) |Z'(t_k)| dt` over k = 1..m.
    pub fn integral(&self, integrand: impl Fn(f64, [f64; 2]) -> f64) -> f64 {
        let mut s = 0.0;
        for k in 1..=self.steps() {
            let t = k as f64 * self.dt;
            s += self.dt * integrand(t, self.points[k]) * self.speed(k);
        }
        s
    }

    /// Curve length by the same quadrature (integrand 1).
    pub fn length(&self) -> f64 {
        self.integral(|_, _| 1.0)
    }
}

/// Right Riemann quadrature of an integrand along a traced component.
pub fn curve_integral(comp: &TracedComponent, integrand: impl Fn(f64, [f64; 2]) -> f64) -> f64 {
    comp.integral(integrand)
}

/// All traced components of the zero set, pairwise disjoint.
#[derive(Debug, Clone, Default)]
pub struct TracedBoundary {
    pub components: Vec<TracedComponent>,
}

impl TracedBoundary {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn total_length(&self) -> f64 {
        self.components.iter().map(|c| c.length()).sum()
    }

    pub fn integral(&self, integrand: impl Fn(f64, [f64; 2]) -> f64 + Copy) -> f64 {
        self.components.iter().map(|c| c.integral(integrand)).sum()
    }
}

/// Trace one closed orbit of the Hamiltonian system from `x0`.
///
/// The orbit is stepped until it first leaves a ball of radius 2 eta around
/// the start (eta is the closure radius), then re-enters the eta ball after
/// at least `m_min` steps; the closure index m is the distance minimizer
/// inside the ball and the computed period is m dt.
pub fn trace(g: &LevelFunction, x0: [f64; 2], opts: &TraceOptions) -> Result<TracedComponent> {
    if !(opts.dt > 0.0) {
        return Err(Error::invalid("trace needs dt > 0"));
    }
    let v0 = g.velocity(x0, 0)?;
    let speed0 = (v0[0] * v0[0] + v0[1] * v0[1]).sqrt();
    let eta = opts.closure_factor * opts.dt * speed0;

    let mut points = vec![x0];
    let mut z = x0;
    let mut left_start_ball = false;
    let mut inside_ball = false;
    let mut best: Option<(usize, f64)> = None; // (k, distance) minimizer in the ball
    let mut dist = 0.0;
    for k in 0..opts.max_steps {
        z = step(g, z, opts, k + 1)?;
        points.push(z);
        let dx = z[0] - x0[0];
        let dy = z[1] - x0[1];
        dist = (dx * dx + dy * dy).sqrt();
        if !left_start_ball {
            if dist > 2.0 * eta {
                left_start_ball = true;
            }
            continue;
        }
        if dist <= eta && k + 1 >= opts.m_min {
            inside_ball = true;
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((k + 1, dist));
            }
        } else if inside_ball {
            // left the closure ball again: the minimizer is the period index
            break;
        }
    }
    let Some((m, _)) = best else {
        return Err(Error::OrbitDidNotClose { steps: points.len() - 1, distance: dist });
    };
    points.truncate(m + 1);
    let speeds: Vec<f64> = (1..=m)
        .map(|k| {
            let dx = points[k][0] - points[k - 1][0];
            let dy = points[k][1] - points[k - 1][1];
            (dx * dx + dy * dy).sqrt() / opts.dt
        })
        .collect();
    if m < 3 {
        return Err(Error::OrbitDidNotClose { steps: m, distance: 0.0 });
    }
    Ok(TracedComponent { start: x0, dt: opts.dt, points, speeds })
}

fn step(g: &LevelFunction, z: [f64; 2], opts: &TraceOptions, step_idx: usize) -> Result<[f64; 2]> {
    let dt = opts.dt;
    match opts.scheme {
        Scheme::ForwardEuler => {
            let v = g.velocity(z, step_idx)?;
            Ok([z[0] + dt * v[0], z[1] + dt * v[1]])
        }
        Scheme::RungeKutta4 => {
            let k1 = g.velocity(z, step_idx)?;
            let k2 = g.velocity([z[0] + 0.5 * dt * k1[0], z[1] + 0.5 * dt * k1[1]], step_idx)?;
            let k3 = g.velocity([z[0] + 0.5 * dt * k2[0], z[1] + 0.5 * dt * k2[1]], step_idx)?;
            let k4 = g.velocity([z[0] + dt * k3[0], z[1] + dt * k3[1]], step_idx)?;
            Ok([
                z[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                z[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ])
        }
    }
}

/// Start points found by the component scan, one per component.
pub fn seed_components(g: &LevelFunction, opts: &TraceOptions) -> Result<Vec<[f64; 2]>> {
    Ok(trace_boundary(g, opts)?.components.iter().map(|c| c.start()).collect())
}

/// Seed and trace every component of the zero set.
///
/// Mesh edges are scanned for sign changes of the nodal values (each cubic
/// edge contributes three sub-segments); a sign-change segment is bisected to
/// a zero of g, the orbit through it is traced, and every sign-change segment
/// passing near that orbit is retired before the scan continues. An empty
/// zero set yields an empty boundary, not an error.
pub fn trace_boundary(g: &LevelFunction, opts: &TraceOptions) -> Result<TracedBoundary> {
    let space = g.space().clone();
    let mesh = space.mesh().clone();
    let coeffs_tol = 1e-12 * g.field().norm_inf();

    // candidate sub-segments (a, b) in node coordinates with a sign change
    let mut segments: Vec<([f64; 2], [f64; 2])> = Vec::new();
    let nv = mesh.num_vertices();
    for e in 0..mesh.num_edges() {
        let [va, vb] = mesh.edge(e);
        // nodes along the edge: endpoint, third points, endpoint
        let chain = [va, nv + 2 * e, nv + 2 * e + 1, vb];
        for w in chain.windows(2) {
            let pa = space.node(w[0]);
            let pb = space.node(w[1]);
            let fa = g.field().coeff_at_node(w[0]);
            let fb = g.field().coeff_at_node(w[1]);
            if fa * fb < 0.0 || fa.abs() <= coeffs_tol || fb.abs() <= coeffs_tol {
                segments.push((pa, pb));
            }
        }
    }

    let mut retired = vec![false; segments.len()];
    let mut components: Vec<TracedComponent> = Vec::new();
    for s in 0..segments.len() {
        if retired[s] {
            continue;
        }
        retired[s] = true;
        let (pa, pb) = segments[s];
        let Some(seed) = bisect_zero(g, pa, pb, coeffs_tol) else {
            continue;
        };
        let comp = trace(g, seed, opts)?;
        // retire every sign-change segment near this orbit
        for (i, &(qa, qb)) in segments.iter().enumerate() {
            if retired[i] {
                continue;
            }
            let mid = [(qa[0] + qb[0]) * 0.5, (qa[1] + qb[1]) * 0.5];
            let seg_len = ((qb[0] - qa[0]).powi(2) + (qb[1] - qa[1]).powi(2)).sqrt();
            let r_mark = seg_len.max(opts.closure_factor * opts.dt * comp.mean_speed());
            if distance_to_points(mid, comp.points()) <= r_mark {
                retired[i] = true;
            }
        }
        // drop duplicates of an already traced component
        let closure_radius = opts.closure_factor * opts.dt * comp.mean_speed();
        let duplicate = components.iter().any(|c| {
            distance_to_points(comp.start(), c.points())
                <= closure_radius.max(opts.closure_factor * opts.dt * c.mean_speed())
        });
        if !duplicate {
            components.push(comp);
        }
    }
    Ok(TracedBoundary { components })
}

fn distance_to_points(p: [f64; 2], pts: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for q in pts {
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        if d < best {
            best = d;
        }
    }
    best
}

/// Bisection of g along a segment with a sign change (or a near-zero end).
fn bisect_zero(g: &LevelFunction, a: [f64; 2], b: [f64; 2], tol: f64) -> Option<[f64; 2]> {
    let fa = g.value_at(a).ok()?;
    let fb = g.value_at(b).ok()?;
    if fa.abs() <= tol {
        return Some(a);
    }
    if fb.abs() <= tol {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    let (mut lo, mut hi, mut flo) = (a, b, fa);
    for _ in 0..200 {
        let mid = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
        let fm = g.value_at(mid).ok()?;
        if fm.abs() <= tol {
            return Some(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    None
}

/// Boundary mass matrix N(Z) over interior nodes:
/// N_ij = sum over components of int phi_j(Z(t)) phi_i(Z(t)) |Z'(t)| dt,
/// evaluated with the right Riemann rule on each orbit partition.
pub fn assemble_nz(boundary: &TracedBoundary, space: &FeSpace) -> Result<CsrMatrix> {
    let n0 = space.num_interior();
    let mut trips: Vec<(u32, u32, f64)> = Vec::new();
    let mut basis = [0.0f64; MAX_LOCAL_NODES];
    let p = space.local_nodes();
    for comp in &boundary.components {
        for k in 1..=comp.steps() {
            let z = comp.point(k);
            let (t, bary) = space.mesh().locate(z)?;
            space.basis_values(bary, &mut basis);
            let w = comp.dt() * comp.speed(k);
            let nodes = space.triangle_nodes(t);
            for a in 0..p {
                let Some(ia) = space.interior_index(nodes[a] as usize) else { continue };
                for b in 0..p {
                    let Some(ib) = space.interior_index(nodes[b] as usize) else { continue };
                    // products are grouped so that (a,b) and (b,a) round identically
                    trips.push((ia as u32, ib as u32, w * (basis[a] * basis[b])));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n0, n0, trips))
}
