//! Matrix and vector assembly for the state equation.
//!
//! All area integrals use the fixed degree-8 triangle rule; the positive-part
//! factors in the penalty matrices are evaluated pointwise at the quadrature
//! nodes without sub-triangle splitting.

use super::field::FeField;
use super::quadrature::triangle_rule;
use super::space::{FeSpace, MAX_LOCAL_NODES};
use super::sparse::CsrMatrix;

/// Stiffness matrix K restricted to interior nodes: K_ij = int grad(phi_j) . grad(phi_i).
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    assemble_stiffness_impl(space, true)
}

/// Stiffness over all nodes, no boundary condition. Intended for energy
/// checks; the state solves use [`assemble_stiffness`].
pub fn assemble_stiffness_full(space: &FeSpace) -> CsrMatrix {
    assemble_stiffness_impl(space, false)
}

fn assemble_stiffness_impl(space: &FeSpace, interior_only: bool) -> CsrMatrix {
    let rule = triangle_rule();
    let p = space.local_nodes();
    let mesh = space.mesh();
    let mut trips = Vec::new();
    let mut grads = [[0.0f64; 2]; MAX_LOCAL_NODES];
    let index = |g: u32| -> Option<u32> {
        if interior_only {
            space.interior_index(g as usize).map(|k| k as u32)
        } else {
            Some(g)
        }
    };
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let mut elem = [[0.0f64; MAX_LOCAL_NODES]; MAX_LOCAL_NODES];
        for q in rule {
            space.basis_gradients(t, q.bary, &mut grads);
            let w = q.weight * area;
            for a in 0..p {
                for b in a..p {
                    elem[a][b] += w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
        }
        let nodes = space.triangle_nodes(t);
        for a in 0..p {
            let Some(ia) = index(nodes[a]) else { continue };
            for b in a..p {
                let Some(ib) = index(nodes[b]) else { continue };
                let v = elem[a][b];
                trips.push((ia, ib, v));
                if ia != ib {
                    trips.push((ib, ia, v));
                }
            }
        }
    }
    let n = if interior_only { space.num_interior() } else { space.num_nodes() };
    CsrMatrix::from_triplets(n, n, trips)
}

/// Load vector F_i = int f phi_i over interior nodes.
pub fn assemble_load(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = triangle_rule();
    let p = space.local_nodes();
    let mesh = space.mesh();
    let mut out = vec![0.0f64; space.num_interior()];
    let mut basis = [0.0f64; MAX_LOCAL_NODES];
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let [pa, pb, pc] = mesh.triangle_vertices(t);
        let nodes = space.triangle_nodes(t);
        for q in rule {
            space.basis_values(q.bary, &mut basis);
            let x = [
                q.bary[0] * pa[0] + q.bary[1] * pb[0] + q.bary[2] * pc[0],
                q.bary[0] * pa[1] + q.bary[1] * pb[1] + q.bary[2] * pc[1],
            ];
            let w = q.weight * area * f(x);
            for a in 0..p {
                if let Some(ia) = space.interior_index(nodes[a] as usize) {
                    out[ia] += w * basis[a];
                }
            }
        }
    }
    out
}

/// Weighted mass matrix between two spaces on the same mesh:
/// M_ij = int w(x) psi_j(x) phi_i(x), rows over `row_space` (interior nodes
/// only when `rows_interior`), columns over all nodes of `col_space`.
///
/// The weight receives the triangle index, the barycentric quadrature point,
/// the row-space basis values there, and the point itself.
pub fn assemble_weighted_mass(
    row_space: &FeSpace,
    col_space: &FeSpace,
    rows_interior: bool,
    weight: impl Fn(usize, [f64; 3], &[f64; MAX_LOCAL_NODES], [f64; 2]) -> f64,
) -> CsrMatrix {
    assert!(std::sync::Arc::ptr_eq(row_space.mesh(), col_space.mesh()));
    let rule = triangle_rule();
    let pr = row_space.local_nodes();
    let pc = col_space.local_nodes();
    let mesh = row_space.mesh();
    let mut trips = Vec::new();
    let mut row_basis = [0.0f64; MAX_LOCAL_NODES];
    let mut col_basis = [0.0f64; MAX_LOCAL_NODES];
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let [pa, pb, pc_] = mesh.triangle_vertices(t);
        let mut elem = [[0.0f64; MAX_LOCAL_NODES]; MAX_LOCAL_NODES];
        let mut nonzero = false;
        for q in rule {
            row_space.basis_values(q.bary, &mut row_basis);
            col_space.basis_values(q.bary, &mut col_basis);
            let x = [
                q.bary[0] * pa[0] + q.bary[1] * pb[0] + q.bary[2] * pc_[0],
                q.bary[0] * pa[1] + q.bary[1] * pb[1] + q.bary[2] * pc_[1],
            ];
            let w = weight(t, q.bary, &row_basis, x) * q.weight * area;
            if w != 0.0 {
                nonzero = true;
                for a in 0..pr {
                    let wa = w * row_basis[a];
                    for b in 0..pc {
                        elem[a][b] += wa * col_basis[b];
                    }
                }
            }
        }
        if !nonzero {
            continue;
        }
        let rows = row_space.triangle_nodes(t);
        let cols = col_space.triangle_nodes(t);
        for a in 0..pr {
            let ia = if rows_interior {
                match row_space.interior_index(rows[a] as usize) {
                    Some(k) => k as u32,
                    None => continue,
                }
            } else {
                rows[a]
            };
            for b in 0..pc {
                trips.push((ia, cols[b], elem[a][b]));
            }
        }
    }
    let nrows = if rows_interior { row_space.num_interior() } else { row_space.num_nodes() };
    CsrMatrix::from_triplets(nrows, col_space.num_nodes(), trips)
}

/// B1(G): rows over interior state nodes, columns over control nodes,
/// weight max(g, 0)^2.
pub fn assemble_b1(g: &FeField, control_space: &FeSpace) -> CsrMatrix {
    assemble_weighted_mass(g.space(), control_space, true, |t, _bary, row_basis, _x| {
        let gv = g.value_from_basis(t, row_basis);
        let gp = gv.max(0.0);
        gp * gp
    })
}

/// C1(G, U): rows over interior state nodes, columns over state nodes
/// (the perturbation r lives in the state space), weight 2 max(g, 0) u.
pub fn assemble_c1(g: &FeField, u: &FeField) -> CsrMatrix {
    let same_space = std::sync::Arc::ptr_eq(g.space(), u.space());
    assemble_weighted_mass(g.space(), g.space(), true, move |t, bary, row_basis, _x| {
        let gv = g.value_from_basis(t, row_basis);
        let gp = gv.max(0.0);
        if gp == 0.0 {
            return 0.0;
        }
        let uv = if same_space {
            u.value_from_basis(t, row_basis)
        } else {
            // the control space shares the mesh, so the same triangle and
            // barycentric point apply
            let mut ub = [0.0f64; MAX_LOCAL_NODES];
            u.space().basis_values(bary, &mut ub);
            u.value_from_basis(t, &ub)
        };
        2.0 * gp * uv
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{Rect, Triangulation};
    use std::sync::Arc;

    fn spaces(nx: usize, ny: usize, deg: u8) -> Arc<FeSpace> {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mesh = Arc::new(Triangulation::structured(rect, nx, ny).unwrap());
        Arc::new(FeSpace::new(mesh, deg).unwrap())
    }

    fn space_pair(nx: usize, ny: usize) -> (Arc<FeSpace>, Arc<FeSpace>) {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mesh = Arc::new(Triangulation::structured(rect, nx, ny).unwrap());
        let state = Arc::new(FeSpace::new(mesh.clone(), 3).unwrap());
        let control = Arc::new(FeSpace::new(mesh, 1).unwrap());
        (state, control)
    }

    #[test]
    fn gradient_energy_on_a_single_triangle() {
        // one reference triangle (0,0)-(1,0)-(0,1)
        let mesh = Arc::new(
            Triangulation::from_raw(
                vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                vec![[0, 1, 2]],
            )
            .unwrap(),
        );
        for deg in [1u8, 3] {
            let space = Arc::new(FeSpace::new(mesh.clone(), deg).unwrap());
            let k = assemble_stiffness_full(&space);
            // constant field: zero energy
            let ones = vec![1.0; space.num_nodes()];
            let e0 = k.quadratic_form(&ones, &ones);
            assert!(e0.abs() < 1e-13, "constant energy {e0} (deg {deg})");
            // field x1: energy = area = 1/2
            let f = FeField::interpolate(space.clone(), |p| p[0]);
            let e1 = k.quadratic_form(f.coeffs(), f.coeffs());
            assert!((e1 - 0.5).abs() < 1e-13, "x1 energy {e1} (deg {deg})");
        }
    }

    #[test]
    fn stiffness_is_bitwise_symmetric() {
        for deg in [1u8, 3] {
            let space = spaces(6, 5, deg);
            let k = assemble_stiffness(&space);
            k.symmetry_check().unwrap();
        }
    }

    #[test]
    fn b1_vanishes_when_g_is_nonpositive() {
        let (state, control) = space_pair(4, 4);
        let g = FeField::interpolate(state.clone(), |_| -1.0);
        let b1 = assemble_b1(&g, &control);
        assert!(b1.entries().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn b1_with_unit_g_is_the_mass_matrix() {
        // degree-1 space for both: B1 rows must equal the interior rows of
        // the analytic P1 mass matrix (area/6 diagonal, area/12 off-diagonal)
        let space = spaces(5, 4, 1);
        let g = FeField::interpolate(space.clone(), |_| 1.0);
        let b1 = assemble_b1(&g, &space);
        let mesh = space.mesh();
        let mut mass = vec![std::collections::BTreeMap::new(); space.num_interior()];
        for t in 0..mesh.num_triangles() {
            let area = mesh.area(t);
            let nodes = space.triangle_nodes(t);
            for (a, &ga) in nodes.iter().enumerate() {
                let Some(ia) = space.interior_index(ga as usize) else { continue };
                for (b, &gb) in nodes.iter().enumerate() {
                    let v = if a == b { area / 6.0 } else { area / 12.0 };
                    *mass[ia].entry(gb as usize).or_insert(0.0) += v;
                }
            }
        }
        for (i, j, v) in b1.entries() {
            let want = mass[i].get(&j).copied().unwrap_or(0.0);
            assert!((v - want).abs() < 1e-14, "B1[{i},{j}] = {v}, mass = {want}");
        }
    }

    #[test]
    fn c1_vanishes_for_zero_control_or_negative_g() {
        let state = spaces(3, 3, 3);
        let g = FeField::interpolate(state.clone(), |p| p[0] * p[0] + p[1] * p[1] - 0.25);
        let u0 = FeField::zeros(state.clone());
        assert!(assemble_c1(&g, &u0).entries().all(|(_, _, v)| v == 0.0));
        let gneg = FeField::interpolate(state.clone(), |_| -2.0);
        let u1 = FeField::interpolate(state.clone(), |_| 1.0);
        assert!(assemble_c1(&gneg, &u1).entries().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn c1_with_unit_data_is_twice_the_mass_matrix() {
        let space = spaces(4, 3, 1);
        let g = FeField::interpolate(space.clone(), |_| 1.0);
        let u = FeField::interpolate(space.clone(), |_| 1.0);
        let c1 = assemble_c1(&g, &u);
        let b1 = assemble_b1(&g, &space);
        for (i, j, v) in c1.entries() {
            let want = 2.0 * b1.get(i, j);
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn b1_scales_quadratically_in_g() {
        let (state, control) = space_pair(4, 4);
        let g = FeField::interpolate(state.clone(), |p| 1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1]);
        // strictly positive on D
        assert!(g.coeffs().iter().all(|&c| c > 0.0));
        let alpha = 1.7;
        let g2 = FeField::from_coeffs(
            state.clone(),
            g.coeffs().iter().map(|&c| alpha * c).collect(),
        );
        let b1 = assemble_b1(&g, &control);
        let b2 = assemble_b1(&g2, &control);
        for ((i, j, v), (i2, j2, v2)) in b1.entries().zip(b2.entries()) {
            assert_eq!((i, j), (i2, j2));
            assert!((v2 - alpha * alpha * v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }
}
