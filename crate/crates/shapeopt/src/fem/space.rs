//! Lagrange finite element spaces of degree 1 and 3 on a triangulation.
//!
//! Degree 3 carries ten nodes per triangle: the vertices, two nodes per edge
//! at the third points, and the centroid. Node numbering is vertices first,
//! then edge nodes (two per edge, in edge order, the node nearer the lower
//! vertex id first), then centroids, which makes the numbering a
//! deterministic function of the mesh.

use std::sync::Arc;

use super::mesh::{signed_area, Triangulation};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub const MAX_LOCAL_NODES: usize = 10;

#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Triangulation>,
    degree: u8,
    nodes: Vec<[f64; 2]>,
    conn: Vec<u32>,
    boundary_node: Vec<bool>,
    interior: Vec<u32>,
    interior_of: Vec<u32>,
    recovery: [CsrMatrix; 2],
}

impl FeSpace {
    pub fn new(mesh: Arc<Triangulation>, degree: u8) -> Result<Self> {
        if degree != 1 && degree != 3 {
            return Err(Error::invalid(format!("unsupported element degree {degree}")));
        }
        let nv = mesh.num_vertices();
        let ne = mesh.num_edges();
        let nt = mesh.num_triangles();
        let per_tri = if degree == 1 { 3 } else { 10 };

        let mut nodes = Vec::new();
        let mut boundary_node = Vec::new();
        let mut conn = Vec::with_capacity(per_tri * nt);

        for v in 0..nv {
            nodes.push(mesh.vertex(v));
            boundary_node.push(mesh.is_boundary_vertex(v));
        }
        if degree == 3 {
            for e in 0..ne {
                let [a, b] = mesh.edge(e);
                let pa = mesh.vertex(a);
                let pb = mesh.vertex(b);
                for frac in [1.0 / 3.0, 2.0 / 3.0] {
                    nodes.push([pa[0] + (pb[0] - pa[0]) * frac, pa[1] + (pb[1] - pa[1]) * frac]);
                    boundary_node.push(mesh.is_boundary_edge(e));
                }
            }
            for t in 0..nt {
                let [pa, pb, pc] = mesh.triangle_vertices(t);
                nodes.push([(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]);
                boundary_node.push(false);
            }
        }

        for t in 0..nt {
            let tri = mesh.triangle(t);
            if degree == 1 {
                conn.extend(tri.iter().map(|&v| v as u32));
            } else {
                let mut local = [0u32; 10];
                local[0] = tri[0] as u32;
                local[1] = tri[1] as u32;
                local[2] = tri[2] as u32;
                let eids = mesh.triangle_edge_ids(t);
                // local edges: (v0,v1), (v1,v2), (v2,v0); local node pairs
                // (3,4), (5,6), (7,8) ordered along the local direction
                let pairs = [(tri[0], tri[1], 3, 4), (tri[1], tri[2], 5, 6), (tri[2], tri[0], 7, 8)];
                for (k, &(from, _to, l_near, l_far)) in pairs.iter().enumerate() {
                    let e = eids[k];
                    let [lo, _hi] = mesh.edge(e);
                    let base = (nv + 2 * e) as u32;
                    if from == lo {
                        local[l_near] = base;
                        local[l_far] = base + 1;
                    } else {
                        local[l_near] = base + 1;
                        local[l_far] = base;
                    }
                }
                local[9] = (nv + 2 * ne + t) as u32;
                conn.extend_from_slice(&local);
            }
        }

        let mut interior = Vec::new();
        let mut interior_of = vec![u32::MAX; nodes.len()];
        for (i, &b) in boundary_node.iter().enumerate() {
            if !b {
                interior_of[i] = interior.len() as u32;
                interior.push(i as u32);
            }
        }

        let mut space = FeSpace {
            mesh,
            degree,
            nodes,
            conn,
            boundary_node,
            interior,
            interior_of,
            recovery: [
                CsrMatrix::from_triplets(0, 0, Vec::new()),
                CsrMatrix::from_triplets(0, 0, Vec::new()),
            ],
        };
        space.recovery = space.build_recovery();
        Ok(space)
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    /// Total node count n.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Interior node count n0.
    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.boundary_node[i]
    }

    pub fn interior_nodes(&self) -> &[u32] {
        &self.interior
    }

    /// Interior index of a global node, if interior.
    pub fn interior_index(&self, global: usize) -> Option<usize> {
        let k = self.interior_of[global];
        (k != u32::MAX).then_some(k as usize)
    }

    pub fn local_nodes(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            10
        }
    }

    pub fn triangle_nodes(&self, t: usize) -> &[u32] {
        let p = self.local_nodes();
        &self.conn[t * p..(t + 1) * p]
    }

    /// Basis values at a barycentric point; `out[..local_nodes()]` is filled.
    pub fn basis_values(&self, bary: [f64; 3], out: &mut [f64; MAX_LOCAL_NODES]) {
        match self.degree {
            1 => {
                out[0] = bary[0];
                out[1] = bary[1];
                out[2] = bary[2];
            }
            _ => p3_values(bary, out),
        }
    }

    /// Cartesian basis gradients at a barycentric point of triangle `t`.
    pub fn basis_gradients(
        &self,
        t: usize,
        bary: [f64; 3],
        out: &mut [[f64; 2]; MAX_LOCAL_NODES],
    ) {
        let gl = self.lambda_gradients(t);
        match self.degree {
            1 => {
                out[0] = gl[0];
                out[1] = gl[1];
                out[2] = gl[2];
            }
            _ => {
                let mut dl = [[0.0f64; 3]; MAX_LOCAL_NODES];
                p3_lambda_grads(bary, &mut dl);
                for k in 0..10 {
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for c in 0..3 {
                        gx += dl[k][c] * gl[c][0];
                        gy += dl[k][c] * gl[c][1];
                    }
                    out[k] = [gx, gy];
                }
            }
        }
    }

    /// Gradients of the barycentric coordinates of triangle `t` (constant).
    pub fn lambda_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.mesh.triangle_vertices(t);
        let area = signed_area(a, b, c);
        let s = 0.5 / area;
        [
            [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
            [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
            [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
        ]
    }

    /// Area-weighted derivative recovery matrix for the given axis (0 or 1).
    ///
    /// Row i holds the coefficients expressing the recovered nodal derivative
    /// at node A_i as a linear combination of the field coefficients over the
    /// triangles containing A_i.
    pub fn recovery_matrix(&self, axis: usize) -> &CsrMatrix {
        &self.recovery[axis]
    }

    fn build_recovery(&self) -> [CsrMatrix; 2] {
        let n = self.num_nodes();
        let mut area_sum = vec![0.0f64; n];
        let mut trips: [Vec<(u32, u32, f64)>; 2] = [Vec::new(), Vec::new()];
        let mut grads = [[0.0f64; 2]; MAX_LOCAL_NODES];
        for t in 0..self.mesh.num_triangles() {
            let area = self.mesh.area(t);
            let local = self.triangle_nodes(t).to_vec();
            for (l, &gi) in local.iter().enumerate() {
                area_sum[gi as usize] += area;
                let bary = self.local_node_bary(l);
                self.basis_gradients(t, bary, &mut grads);
                for (m, &gj) in local.iter().enumerate() {
                    trips[0].push((gi, gj, area * grads[m][0]));
                    trips[1].push((gi, gj, area * grads[m][1]));
                }
            }
        }
        let mut out = Vec::with_capacity(2);
        for t in trips {
            let mut m = CsrMatrix::from_triplets(n, n, t);
            m.scale_rows(&area_sum.iter().map(|&a| 1.0 / a).collect::<Vec<_>>());
            out.push(m);
        }
        let b = out.pop().unwrap();
        let a = out.pop().unwrap();
        [a, b]
    }

    /// Barycentric coordinates of a local node.
    pub fn local_node_bary(&self, l: usize) -> [f64; 3] {
        if self.degree == 1 {
            match l {
                0 => [1.0, 0.0, 0.0],
                1 => [0.0, 1.0, 0.0],
                _ => [0.0, 0.0, 1.0],
            }
        } else {
            P3_LATTICE[l]
        }
    }
}

/// Barycentric lattice of the ten cubic nodes, matching the local order
/// vertex, vertex, vertex, edge01 pair, edge12 pair, edge20 pair, centroid.
const P3_LATTICE: [[f64; 3]; 10] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [2.0 / 3.0, 1.0 / 3.0, 0.0],
    [1.0 / 3.0, 2.0 / 3.0, 0.0],
    [0.0, 2.0 / 3.0, 1.0 / 3.0],
    [0.0, 1.0 / 3.0, 2.0 / 3.0],
    [1.0 / 3.0, 0.0, 2.0 / 3.0],
    [2.0 / 3.0, 0.0, 1.0 / 3.0],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
];

/// Lattice exponents (i, j, k) with i + j + k = 3 for each local node.
const P3_EXP: [[u8; 3]; 10] = [
    [3, 0, 0],
    [0, 3, 0],
    [0, 0, 3],
    [2, 1, 0],
    [1, 2, 0],
    [0, 2, 1],
    [0, 1, 2],
    [1, 0, 2],
    [2, 0, 1],
    [1, 1, 1],
];

#[inline]
fn silvester(m: u8, x: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => 3.0 * x,
        2 => 0.5 * (3.0 * x) * (3.0 * x - 1.0),
        _ => (3.0 * x) * (3.0 * x - 1.0) * (3.0 * x - 2.0) / 6.0,
    }
}

#[inline]
fn silvester_deriv(m: u8, x: f64) -> f64 {
    match m {
        0 => 0.0,
        1 => 3.0,
        2 => 9.0 * x - 1.5,
        _ => 13.5 * x * x - 9.0 * x + 1.0,
    }
}

fn p3_values(bary: [f64; 3], out: &mut [f64; MAX_LOCAL_NODES]) {
    for (k, exp) in P3_EXP.iter().enumerate() {
        out[k] = silvester(exp[0], bary[0]) * silvester(exp[1], bary[1]) * silvester(exp[2], bary[2]);
    }
}

fn p3_lambda_grads(bary: [f64; 3], out: &mut [[f64; 3]; MAX_LOCAL_NODES]) {
    for (k, exp) in P3_EXP.iter().enumerate() {
        let p = [
            silvester(exp[0], bary[0]),
            silvester(exp[1], bary[1]),
            silvester(exp[2], bary[2]),
        ];
        let d = [
            silvester_deriv(exp[0], bary[0]),
            silvester_deriv(exp[1], bary[1]),
            silvester_deriv(exp[2], bary[2]),
        ];
        out[k] = [d[0] * p[1] * p[2], p[0] * d[1] * p[2], p[0] * p[1] * d[2]];
    }
}
