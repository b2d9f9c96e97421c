//! Half-edge grid mesh and discrete differential operators.
//!
//! The mesh is a `k x k` grid over a rectangular domain with each cell split
//! along its `(i, j)`-`(i+1, j+1)` diagonal. Planar positions are fixed at
//! construction; heights are passed separately to every operator so the
//! optimizer can swap them wholesale.

mod curvature;
mod geometry;
mod partials;

pub use curvature::{vertex_curvatures, VertexCurvatures};
pub use geometry::{face_geometry, laplacians, FaceGeometry, LaplacianPair, MIN_TRIANGLE_AREA};
pub use partials::{
    curvature_partials, half_edge_partials, laplacian_partials, CurvaturePartials, HalfEdgePartials,
};

use crate::{Error, Result};

/// Directed edge `from -> to` of face `face`; `opposite` is the third vertex
/// of that face, so `from -> to -> opposite` runs counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfEdge {
    pub from: usize,
    pub to: usize,
    pub opposite: usize,
    pub face: usize,
    pub twin: Option<usize>,
    pub edge: usize,
}

/// Undirected mesh edge with `a < b`. `twin` is `None` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshEdge {
    pub a: usize,
    pub b: usize,
    pub half_edge: usize,
    pub twin: Option<usize>,
}

impl MeshEdge {
    pub fn is_boundary(&self) -> bool {
        self.twin.is_none()
    }

    pub fn half_edges(&self) -> impl Iterator<Item = usize> {
        std::iter::once(self.half_edge).chain(self.twin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfEdgeMesh {
    k: usize,
    bounds: [f64; 4],
    xy: Vec<[f64; 2]>,
    faces: Vec<[usize; 3]>,
    half_edges: Vec<HalfEdge>,
    edges: Vec<MeshEdge>,
    outgoing: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    stencil: Vec<Vec<usize>>,
}

/// Builds the `k x k` grid mesh over `bounds = [min_x, min_y, max_x, max_y]`.
pub fn build_grid_mesh(k: usize, bounds: [f64; 4]) -> Result<HalfEdgeMesh> {
    if k < 2 {
        return Err(Error::GridTooSmall(k));
    }
    if !(bounds[2] > bounds[0] && bounds[3] > bounds[1]) {
        return Err(Error::InvalidParameter(format!("empty mesh bounds {bounds:?}")));
    }
    let dx = (bounds[2] - bounds[0]) / (k - 1) as f64;
    let dy = (bounds[3] - bounds[1]) / (k - 1) as f64;
    let mut xy = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            let x = if c == k - 1 { bounds[2] } else { bounds[0] + c as f64 * dx };
            let y = if r == k - 1 { bounds[3] } else { bounds[1] + r as f64 * dy };
            xy.push([x, y]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (k - 1) * (k - 1));
    for r in 0..k - 1 {
        for c in 0..k - 1 {
            let a = r * k + c;
            let b = a + 1;
            let cc = a + k + 1;
            let d = a + k;
            faces.push([a, b, cc]);
            faces.push([a, cc, d]);
        }
    }

    let n = xy.len();
    let mut half_edges = Vec::with_capacity(faces.len() * 3);
    let mut by_pair = std::collections::HashMap::with_capacity(faces.len() * 3);
    for (f, tri) in faces.iter().enumerate() {
        for c in 0..3 {
            let h = half_edges.len();
            let (from, to, opposite) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
            half_edges.push(HalfEdge { from, to, opposite, face: f, twin: None, edge: 0 });
            by_pair.insert((from, to), h);
        }
    }
    let mut edges = Vec::new();
    for h in 0..half_edges.len() {
        let HalfEdge { from, to, .. } = half_edges[h];
        let twin = by_pair.get(&(to, from)).copied();
        half_edges[h].twin = twin;
        if twin.is_none() || from < to {
            half_edges[h].edge = edges.len();
            if let Some(t) = twin {
                half_edges[t].edge = edges.len();
            }
            edges.push(MeshEdge {
                a: from.min(to),
                b: from.max(to),
                half_edge: h,
                twin,
            });
        }
    }
    // the twin loop above may assign a twin's edge before visiting it; fix up
    for (e, me) in edges.iter().enumerate() {
        for h in me.half_edges() {
            half_edges[h].edge = e;
        }
    }

    let mut outgoing = vec![Vec::new(); n];
    for (h, he) in half_edges.iter().enumerate() {
        outgoing[he.from].push(h);
    }
    let mut vertex_edges = vec![Vec::new(); n];
    let mut boundary = vec![false; n];
    for (e, me) in edges.iter().enumerate() {
        vertex_edges[me.a].push(e);
        vertex_edges[me.b].push(e);
        if me.is_boundary() {
            boundary[me.a] = true;
            boundary[me.b] = true;
        }
    }
    let stencil = (0..n)
        .map(|i| {
            let mut s: Vec<usize> = vertex_edges[i]
                .iter()
                .map(|&e| if edges[e].a == i { edges[e].b } else { edges[e].a })
                .collect();
            s.push(i);
            s.sort_unstable();
            s
        })
        .collect();

    Ok(HalfEdgeMesh {
        k,
        bounds,
        xy,
        faces,
        half_edges,
        edges,
        outgoing,
        vertex_edges,
        boundary,
        stencil,
    })
}

impl HalfEdgeMesh {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn vertex_count(&self) -> usize {
        self.xy.len()
    }

    pub fn xy(&self) -> &[[f64; 2]] {
        &self.xy
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn half_edges(&self) -> &[HalfEdge] {
        &self.half_edges
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    /// Half-edges leaving vertex `i`; one per incident face.
    pub fn outgoing(&self, i: usize) -> &[usize] {
        &self.outgoing[i]
    }

    pub fn vertex_edges(&self, i: usize) -> &[usize] {
        &self.vertex_edges[i]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Sorted `{i}` plus its one-ring. Every per-vertex quantity at `i`
    /// depends only on heights in this set.
    pub fn stencil(&self, i: usize) -> &[usize] {
        &self.stencil[i]
    }

    /// The half-edge following `h` around its face.
    pub fn next(&self, h: usize) -> usize {
        let f = h / 3;
        3 * f + (h % 3 + 1) % 3
    }

    /// Vertices of half-edge `h` in `(from, to, opposite)` order.
    pub fn roles(&self, h: usize) -> [usize; 3] {
        let he = &self.half_edges[h];
        [he.from, he.to, he.opposite]
    }

    pub fn position(&self, i: usize, z: &[f64]) -> [f64; 3] {
        [self.xy[i][0], self.xy[i][1], z[i]]
    }

    /// Grid spacing in x and y.
    pub fn pitch(&self) -> [f64; 2] {
        let d = (self.k - 1) as f64;
        [(self.bounds[2] - self.bounds[0]) / d, (self.bounds[3] - self.bounds[1]) / d]
    }

    /// Longest edge of the flat mesh: the cell diagonal.
    pub fn longest_flat_edge(&self) -> f64 {
        let [dx, dy] = self.pitch();
        dx.hypot(dy)
    }

    pub fn boundary_half_edge_count(&self) -> usize {
        self.half_edges.iter().filter(|h| h.twin.is_none()).count()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let tol = 1e-12;
        p[0] >= self.bounds[0] - tol
            && p[0] <= self.bounds[2] + tol
            && p[1] >= self.bounds[1] - tol
            && p[1] <= self.bounds[3] + tol
    }

    /// Face containing `p` and the barycentric weights of `p` with respect to
    /// that face's vertices (in face order).
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if !self.contains(p) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        let [dx, dy] = self.pitch();
        let cells = self.k - 1;
        let fx = ((p[0] - self.bounds[0]) / dx).clamp(0.0, cells as f64);
        let fy = ((p[1] - self.bounds[1]) / dy).clamp(0.0, cells as f64);
        let c = (fx.floor() as usize).min(cells - 1);
        let r = (fy.floor() as usize).min(cells - 1);
        let (u, w) = (fx - c as f64, fy - r as f64);
        let cell = r * cells + c;
        if u >= w {
            Ok((2 * cell, [1.0 - u, u - w, w]))
        } else {
            Ok((2 * cell + 1, [1.0 - w, u, w - u]))
        }
    }

    /// Lifts a planar point onto the piecewise-linear surface.
    pub fn surface_point(&self, p: [f64; 2], z: &[f64]) -> Result<[f64; 3]> {
        let (f, bary) = self.locate(p)?;
        let h: f64 = self.faces[f].iter().zip(bary).map(|(&v, b)| b * z[v]).sum();
        Ok([p[0], p[1], h])
    }

    /// Vertices whose planar position falls in the axis-aligned rectangle.
    pub fn vertices_in_rect(&self, min: [f64; 2], max: [f64; 2]) -> Vec<usize> {
        let [dx, dy] = self.pitch();
        let cells = (self.k - 1) as f64;
        let lo = |v: f64, o: f64, d: f64| ((v - o) / d).ceil().max(0.0);
        let hi = |v: f64, o: f64, d: f64| ((v - o) / d).floor().min(cells);
        let (c0, r0) = (lo(min[0], self.bounds[0], dx), lo(min[1], self.bounds[1], dy));
        let (c1, r1) = (hi(max[0], self.bounds[0], dx), hi(max[1], self.bounds[1], dy));
        if c1 < c0 || r1 < r0 {
            return Vec::new();
        }
        let (c0, r0, c1, r1) = (c0 as usize, r0 as usize, c1 as usize, r1 as usize);
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.push(r * self.k + c);
            }
        }
        out
    }

    /// Total surface area, each triangle counted once.
    pub fn surface_area(&self, z: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.position(a, z), self.position(b, z), self.position(c, z));
                0.5 * norm(cross(sub(pb, pa), sub(pc, pa)))
            })
            .sum()
    }
}

/// Heights of a sphere cap over the mesh: apex at the domain centre with
/// height `apex_fraction * max(domain width, height)`, and zero at the
/// domain corners.
pub fn init_sphere_cap(mesh: &HalfEdgeMesh, apex_fraction: f64) -> Result<Vec<f64>> {
    if !(apex_fraction > 0.0 && apex_fraction <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "sphere cap apex fraction must be in (0, 0.5], got {apex_fraction}"
        )));
    }
    let b = mesh.bounds();
    let (w, hgt) = (b[2] - b[0], b[3] - b[1]);
    let h = apex_fraction * w.max(hgt);
    let rho = 0.5 * w.hypot(hgt);
    let radius = (rho * rho + h * h) / (2.0 * h);
    Ok(cap_heights(mesh, radius, h))
}

/// Sphere of the given radius, shifted so the domain corners sit at zero.
pub fn sphere_cap_with_radius(mesh: &HalfEdgeMesh, radius: f64) -> Result<Vec<f64>> {
    let b = mesh.bounds();
    let rho = 0.5 * (b[2] - b[0]).hypot(b[3] - b[1]);
    if !(radius > rho) {
        return Err(Error::InvalidParameter(format!(
            "sphere radius {radius} does not cover the domain half-diagonal {rho}"
        )));
    }
    let h = radius - (radius * radius - rho * rho).sqrt();
    Ok(cap_heights(mesh, radius, h))
}

fn cap_heights(mesh: &HalfEdgeMesh, radius: f64, apex: f64) -> Vec<f64> {
    let b = mesh.bounds();
    let center = [(b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0];
    mesh.xy()
        .iter()
        .map(|p| {
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            let s = (radius * radius - d2).max(0.0).sqrt();
            // apex - (R - sqrt(R^2 - d^2)), written to stay exact for tiny caps
            (apex - d2 / (radius + s)).max(0.0)
        })
        .collect()
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
