//! Triangulations of the fixed polygonal hold-all.
//!
//! The mesh is immutable after construction. Point location uses a uniform
//! background grid of triangle buckets, so evaluating finite element fields
//! along traced curves stays O(1) per query.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Axis-aligned rectangle, the hold-all domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let width = xmax - xmin;
        let height = ymax - ymin;
        if !(width > 0.0) || !(height > 0.0) {
            return Err(Error::DegenerateRectangle { width, height });
        }
        Ok(Rect { xmin, xmax, ymin, ymax })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.xmin - tol
            && p[0] <= self.xmax + tol
            && p[1] >= self.ymin - tol
            && p[1] <= self.ymax + tol
    }
}

/// Background grid for point location.
#[derive(Debug, Clone)]
struct Locator {
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    origin: [f64; 2],
    buckets: Vec<Vec<u32>>,
}

/// Conforming triangulation with positive-area triangles.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    /// Unique undirected edges as [min, max] vertex pairs, in first-encounter order.
    edges: Vec<[usize; 2]>,
    /// Edge ids per triangle, local order (v0,v1), (v1,v2), (v2,v0).
    triangle_edges: Vec<[usize; 3]>,
    boundary_edge: Vec<bool>,
    bbox: Rect,
    locator: Locator,
}

impl Triangulation {
    /// Build from raw arrays, checking orientation and conformity.
    pub fn from_raw(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::invalid("a triangulation needs at least one triangle"));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::invalid(format!("triangle {t} references vertex {v}")));
                }
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a > 0.0) {
                return Err(Error::DegenerateTriangle(t, a));
            }
        }

        // Edge table: id by first encounter, triangle order fixed => deterministic.
        let mut edge_of = std::collections::HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_count: Vec<u8> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let mut ids = [0usize; 3];
            for (k, (a, b)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = if a < b { (a, b) } else { (b, a) };
                let id = *edge_of.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_count.push(0);
                    edges.len() - 1
                });
                if edge_count[id] == 2 {
                    return Err(Error::NonConformingMesh(key.0, key.1));
                }
                edge_count[id] += 1;
                ids[k] = id;
            }
            triangle_edges.push(ids);
        }
        let boundary_edge: Vec<bool> = edge_count.iter().map(|&c| c == 1).collect();
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, &is_b) in boundary_edge.iter().enumerate() {
            if is_b {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }

        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &vertices {
            xmin = xmin.min(p[0]);
            xmax = xmax.max(p[0]);
            ymin = ymin.min(p[1]);
            ymax = ymax.max(p[1]);
        }
        let bbox = Rect::new(xmin, xmax, ymin, ymax)?;
        let locator = Locator::build(&vertices, &triangles, bbox);

        Ok(Triangulation {
            vertices,
            triangles,
            boundary_vertex,
            edges,
            triangle_edges,
            boundary_edge,
            bbox,
            locator,
        })
    }

    /// Structured mesh of `rect`: nx-by-ny cells, each split along the
    /// (low,low)-(high,high) diagonal. Vertices are ordered lexicographically
    /// by (y, x).
    pub fn structured(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!("structured mesh needs nx, ny >= 2, got {nx}x{ny}")));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = rect.ymin + rect.height() * j as f64 / ny as f64;
            for i in 0..=nx {
                let x = rect.xmin + rect.width() * i as f64 / nx as f64;
                vertices.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v01 = vid(i, j + 1);
                let v11 = vid(i + 1, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_raw(vertices, triangles)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn triangle_edge_ids(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_vertices(t);
        let area = signed_area(a, b, c);
        let la = signed_area(p, b, c) / area;
        let lb = signed_area(a, p, c) / area;
        let lc = signed_area(a, b, p) / area;
        [la, lb, lc]
    }

    /// Find the triangle containing `p`, with its barycentric coordinates.
    ///
    /// Points on shared edges resolve to the triangle where the smallest
    /// barycentric coordinate is largest. Fails if `p` lies outside the mesh
    /// beyond a small tolerance.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-10;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in self.locator.candidates(p) {
            let bary = self.barycentric(t as usize, p);
            let min = bary[0].min(bary[1]).min(bary[2]);
            if best.as_ref().map_or(true, |(_, _, m)| min > *m) {
                best = Some((t as usize, bary, min));
            }
        }
        match best {
            Some((t, bary, min)) if min >= -TOL => Ok((t, bary)),
            _ => Err(Error::PointOutsideDomain(p[0], p[1])),
        }
    }

    /// Exhaustive point location; O(#triangles). Reference implementation
    /// for testing the gridded locator.
    pub fn locate_brute_force(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-10;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.num_triangles() {
            let bary = self.barycentric(t, p);
            let min = bary[0].min(bary[1]).min(bary[2]);
            if best.as_ref().map_or(true, |(_, _, m)| min > *m) {
                best = Some((t, bary, min));
            }
        }
        match best {
            Some((t, bary, min)) if min >= -TOL => Ok((t, bary)),
            _ => Err(Error::PointOutsideDomain(p[0], p[1])),
        }
    }

    /// Plain-text export: `vertices n triangles m`, then `x y flag` lines,
    /// then `i j k` lines (0-based).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {} triangles {}", self.num_vertices(), self.num_triangles())?;
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{} {} {}", p[0], p[1], u8::from(self.boundary_vertex[v]))?;
        }
        for tri in &self.triangles {
            writeln!(w, "{} {} {}", tri[0], tri[1], tri[2])?;
        }
        Ok(())
    }

    /// Parse the text format written by [`write_text`]. Boundary flags are
    /// re-derived from the connectivity.
    ///
    /// [`write_text`]: Triangulation::write_text
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty mesh file".into() })?;
        let header = header?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "vertices" || toks[2] != "triangles" {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected `vertices n triangles m`, got `{header}`"),
            });
        }
        let n: usize = toks[1]
            .parse()
            .map_err(|_| Error::Parse { line: 1, message: "bad vertex count".into() })?;
        let m: usize = toks[3]
            .parse()
            .map_err(|_| Error::Parse { line: 1, message: "bad triangle count".into() })?;
        let mut vertices = Vec::with_capacity(n);
        for _ in 0..n {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "unexpected end of file in vertex block".into(),
            })?;
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `x y flag`, got `{line}`"),
                });
            }
            let x: f64 = f[0].parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: "bad x coordinate".into(),
            })?;
            let y: f64 = f[1].parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: "bad y coordinate".into(),
            })?;
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: n + m + 1,
                message: "unexpected end of file in triangle block".into(),
            })?;
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `i j k`, got `{line}`"),
                });
            }
            let mut tri = [0usize; 3];
            for (k, tok) in f.iter().enumerate() {
                tri[k] = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: "bad vertex index".into(),
                })?;
            }
            triangles.push(tri);
        }
        Self::from_raw(vertices, triangles)
    }
}

impl Locator {
    fn build(vertices: &[[f64; 2]], triangles: &[[usize; 3]], bbox: Rect) -> Self {
        // Aim for ~2 triangles per cell.
        let n = ((triangles.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let nx = n;
        let ny = n;
        let cell_w = bbox.width() / nx as f64;
        let cell_h = bbox.height() / ny as f64;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let ps = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let txmin = ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let txmax = ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let tymin = ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let tymax = ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let i0 = (((txmin - bbox.xmin) / cell_w).floor() as isize).clamp(0, nx as isize - 1);
            let i1 = (((txmax - bbox.xmin) / cell_w).floor() as isize).clamp(0, nx as isize - 1);
            let j0 = (((tymin - bbox.ymin) / cell_h).floor() as isize).clamp(0, ny as isize - 1);
            let j1 = (((tymax - bbox.ymin) / cell_h).floor() as isize).clamp(0, ny as isize - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j as usize * nx + i as usize].push(t as u32);
                }
            }
        }
        Locator { nx, ny, cell_w, cell_h, origin: [bbox.xmin, bbox.ymin], buckets }
    }

    fn candidates(&self, p: [f64; 2]) -> &[u32] {
        let i = (((p[0] - self.origin[0]) / self.cell_w).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let j = (((p[1] - self.origin[1]) / self.cell_h).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        &self.buckets[j * self.nx + i]
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_2x2_counts() {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mesh = Triangulation::structured(rect, 2, 2).unwrap();
        assert_eq!(mesh.num_triangles(), 8);
        assert_eq!(mesh.num_vertices(), 9);
    }

    #[test]
    fn structured_80x80_counts() {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mesh = Triangulation::structured(rect, 80, 80).unwrap();
        assert_eq!(mesh.num_triangles(), 12800);
        assert_eq!(mesh.num_vertices(), 6561);
    }

    #[test]
    fn areas_partition_the_rectangle() {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        for (nx, ny) in [(2, 2), (5, 9), (17, 3)] {
            let mesh = Triangulation::structured(rect, nx, ny).unwrap();
            assert!((mesh.total_area() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_rectangle_is_an_error() {
        assert!(Rect::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(Rect::new(1.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn interior_edges_are_shared_twice() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let mesh = Triangulation::structured(rect, 4, 4).unwrap();
        let mut count = vec![0usize; mesh.num_edges()];
        for t in 0..mesh.num_triangles() {
            for e in mesh.triangle_edge_ids(t) {
                count[e] += 1;
            }
        }
        for e in 0..mesh.num_edges() {
            if mesh.is_boundary_edge(e) {
                assert_eq!(count[e], 1);
            } else {
                assert_eq!(count[e], 2);
            }
        }
    }

    #[test]
    fn locate_agrees_with_brute_force() {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mesh = Triangulation::structured(rect, 13, 7).unwrap();
        // deterministic pseudo-random points
        let mut s = 0x12345u64;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let p = [-1.0 + 2.0 * rnd(), -1.0 + 2.0 * rnd()];
            let (t, _) = mesh.locate(p).unwrap();
            let (tb, _) = mesh.locate_brute_force(p).unwrap();
            assert_eq!(t, tb, "at {p:?}");
        }
        assert!(mesh.locate([1.5, 0.0]).is_err());
        assert!(mesh.locate([0.0, -1.0001]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let rect = Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap();
        let mesh = Triangulation::structured(rect, 3, 4).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let back = Triangulation::read_text(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back.num_vertices(), mesh.num_vertices());
        assert_eq!(back.num_triangles(), mesh.num_triangles());
        for v in 0..mesh.num_vertices() {
            assert_eq!(back.vertex(v), mesh.vertex(v));
            assert_eq!(back.is_boundary_vertex(v), mesh.is_boundary_vertex(v));
        }
        for t in 0..mesh.num_triangles() {
            assert_eq!(back.triangle(t), mesh.triangle(t));
        }
    }
}
