//! Partial derivatives of the mesh operators with respect to vertex heights.
//!
//! Every per-vertex quantity at `i` depends only on heights in
//! [`HalfEdgeMesh::stencil`]`(i)`, so derivatives are stored as sparse rows
//! over that stencil. Entries follow the chain rule from the half-edge
//! primitives (normal, area, cotangent, angle) up to principal curvatures.

use std::ops::Range;

use super::curvature::sign;
use super::{dot, FaceGeometry, HalfEdgeMesh, LaplacianPair, VertexCurvatures};
use crate::sparse::CsrMatrix;
use crate::par;

/// Derivatives of each half-edge's triangle quantities with respect to the
/// heights of its three vertices, indexed by role `[from, to, opposite]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfEdgePartials {
    pub normal: Vec<[[f64; 3]; 3]>,
    pub area: Vec<[f64; 3]>,
    pub cot: Vec<[f64; 3]>,
    pub angle: Vec<[f64; 3]>,
}

/// `a x e3`.
fn cross_e3(a: [f64; 3]) -> [f64; 3] {
    [a[1], -a[0], 0.0]
}

pub fn half_edge_partials(mesh: &HalfEdgeMesh, z: &[f64], geom: &FaceGeometry) -> HalfEdgePartials {
    let rows = par::map_indices(mesh.half_edges().len(), |h| {
        let [i, j, n] = mesh.roles(h);
        let (vi, vj, vn) = (mesh.position(i, z), mesh.position(j, z), mesh.position(n, z));
        let d_normal = [
            cross_e3(super::sub(vn, vj)),
            cross_e3(super::sub(vi, vn)),
            cross_e3(super::sub(vj, vi)),
        ];
        let (a, cot, nrm) = (geom.area[h], geom.cot[h], geom.normal[h]);
        let d_area = d_normal.map(|dn| dot(nrm, dn) / (4.0 * a));
        // e3 components of (v_j - v_n), (v_i - v_n), (2 v_n - v_i - v_j)
        let lin = [vj[2] - vn[2], vi[2] - vn[2], 2.0 * vn[2] - vi[2] - vj[2]];
        let mut d_cot = [0.0; 3];
        for r in 0..3 {
            d_cot[r] = (lin[r] - 2.0 * cot * d_area[r]) / (2.0 * a);
        }
        let d_angle = d_cot.map(|dc| -dc / (1.0 + cot * cot));
        (d_normal, d_area, d_cot, d_angle)
    });
    let mut out = HalfEdgePartials {
        normal: Vec::with_capacity(rows.len()),
        area: Vec::with_capacity(rows.len()),
        cot: Vec::with_capacity(rows.len()),
        angle: Vec::with_capacity(rows.len()),
    };
    for (n, a, c, t) in rows {
        out.normal.push(n);
        out.area.push(a);
        out.cot.push(c);
        out.angle.push(t);
    }
    out
}

/// Sparse Jacobians of the per-vertex quantities. Row `i` has one entry per
/// vertex of `stencil(i)`, in the same order, for every quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePartials {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub vertex_area: Vec<f64>,
    pub gaussian_scaled: Vec<f64>,
    pub gaussian: Vec<f64>,
    pub vertex_normal: Vec<[f64; 3]>,
    pub mean_normal: Vec<[f64; 3]>,
    pub mean: Vec<f64>,
    pub kappa_plus: Vec<f64>,
    pub kappa_minus: Vec<f64>,
}

impl CurvaturePartials {
    pub fn row(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn cols(&self, i: usize) -> &[usize] {
        &self.cols[self.row(i)]
    }

    pub fn col(&self, idx: usize) -> usize {
        self.cols[idx]
    }

    /// Storage index of `d(.)_i / d z_l`, if `l` is in the stencil of `i`.
    pub fn entry(&self, i: usize, l: usize) -> Option<usize> {
        let r = self.row(i);
        self.cols[r.clone()].binary_search(&l).ok().map(|k| r.start + k)
    }
}

/// Below this magnitude the mean-curvature normal is treated as zero and its
/// direction taken from the vertex normal.
const FLAT_MEAN_NORMAL: f64 = 1e-10;

#[derive(Default)]
struct RowPartials {
    d_area: Vec<f64>,
    d_ks: Vec<f64>,
    d_k: Vec<f64>,
    d_n: Vec<[f64; 3]>,
    d_hn: Vec<[f64; 3]>,
    d_h: Vec<f64>,
    d_kp: Vec<f64>,
    d_km: Vec<f64>,
}

pub fn curvature_partials(
    mesh: &HalfEdgeMesh,
    z: &[f64],
    geom: &FaceGeometry,
    lap: &LaplacianPair,
    curv: &VertexCurvatures,
    hp: &HalfEdgePartials,
) -> CurvaturePartials {
    let rows = par::map_indices(mesh.vertex_count(), |i| vertex_row(mesh, z, geom, lap, curv, hp, i));
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    row_ptr.push(0);
    let nnz: usize = (0..mesh.vertex_count()).map(|i| mesh.stencil(i).len()).sum();
    let mut out = CurvaturePartials {
        row_ptr: Vec::new(),
        cols: Vec::with_capacity(nnz),
        vertex_area: Vec::with_capacity(nnz),
        gaussian_scaled: Vec::with_capacity(nnz),
        gaussian: Vec::with_capacity(nnz),
        vertex_normal: Vec::with_capacity(nnz),
        mean_normal: Vec::with_capacity(nnz),
        mean: Vec::with_capacity(nnz),
        kappa_plus: Vec::with_capacity(nnz),
        kappa_minus: Vec::with_capacity(nnz),
    };
    for (i, r) in rows.into_iter().enumerate() {
        out.cols.extend_from_slice(mesh.stencil(i));
        out.vertex_area.extend(r.d_area);
        out.gaussian_scaled.extend(r.d_ks);
        out.gaussian.extend(r.d_k);
        out.vertex_normal.extend(r.d_n);
        out.mean_normal.extend(r.d_hn);
        out.mean.extend(r.d_h);
        out.kappa_plus.extend(r.d_kp);
        out.kappa_minus.extend(r.d_km);
        row_ptr.push(out.cols.len());
    }
    out.row_ptr = row_ptr;
    out
}

fn vertex_row(
    mesh: &HalfEdgeMesh,
    z: &[f64],
    geom: &FaceGeometry,
    lap: &LaplacianPair,
    curv: &VertexCurvatures,
    hp: &HalfEdgePartials,
    i: usize,
) -> RowPartials {
    let stencil = mesh.stencil(i);
    let pos = |v: usize| stencil.binary_search(&v).expect("vertex outside stencil");
    let m = stencil.len();
    let mut r = RowPartials {
        d_area: vec![0.0; m],
        d_ks: vec![0.0; m],
        d_n: vec![[0.0; 3]; m],
        ..Default::default()
    };
    let mut d_lv = vec![[0.0; 3]; m];

    for &h in mesh.outgoing(i) {
        for (role, v) in mesh.roles(h).into_iter().enumerate() {
            let p = pos(v);
            r.d_area[p] += hp.area[h][role] / 3.0;
            for c in 0..3 {
                r.d_n[p][c] += hp.normal[h][role][c];
            }
        }
        // angle at i in this face belongs to the half-edge opposite i
        let g = mesh.next(h);
        for (role, v) in mesh.roles(g).into_iter().enumerate() {
            r.d_ks[pos(v)] -= hp.angle[g][role];
        }
    }

    let vi = mesh.position(i, z);
    for &e in mesh.vertex_edges(i) {
        let me = mesh.edges()[e];
        let j = if me.a == i { me.b } else { me.a };
        let vj = mesh.position(j, z);
        let diff = [vj[0] - vi[0], vj[1] - vi[1], vj[2] - vi[2]];
        for h in me.half_edges() {
            for (role, v) in mesh.roles(h).into_iter().enumerate() {
                let dw = 0.5 * hp.cot[h][role];
                let p = pos(v);
                for c in 0..3 {
                    d_lv[p][c] += dw * diff[c];
                }
            }
        }
        let w = lap.edge_weight[e];
        d_lv[pos(j)][2] += w;
        d_lv[pos(i)][2] -= w;
    }

    let d = geom.vertex_area[i];
    let (k, lv, hn) = (curv.gaussian[i], curv.laplace_position[i], curv.mean_normal[i]);
    let hn_norm = dot(hn, hn).sqrt();
    let nv = curv.vertex_normal[i];
    let nv_norm = dot(nv, nv).sqrt();
    let unit_normal = nv.map(|c| c / nv_norm);
    let s = sign(dot(curv.vertex_normal[i], hn));
    let (kp, km) = (curv.kappa_plus[i], curv.kappa_minus[i]);
    let gap = kp - km;

    r.d_k = (0..m).map(|p| (r.d_ks[p] - r.d_area[p] * k) / d).collect();
    r.d_hn = (0..m)
        .map(|p| {
            let mut out = [0.0; 3];
            for c in 0..3 {
                out[c] = -0.5 * (d_lv[p][c] / d - lv[c] * r.d_area[p] / (d * d));
            }
            out
        })
        .collect();
    r.d_h = r
        .d_hn
        .iter()
        .map(|dhn| {
            if hn_norm > FLAT_MEAN_NORMAL {
                s * dot(hn, *dhn) / hn_norm
            } else {
                // at a flat vertex the mean-curvature normal grows along the normal
                dot(unit_normal, *dhn)
            }
        })
        .collect();
    if curv.clamped[i] || gap <= 0.0 {
        r.d_kp = r.d_h.clone();
        r.d_km = r.d_h.clone();
    } else {
        r.d_kp = (0..m).map(|p| (2.0 * kp * r.d_h[p] - r.d_k[p]) / gap).collect();
        r.d_km = (0..m).map(|p| (r.d_k[p] - 2.0 * km * r.d_h[p]) / gap).collect();
    }
    r
}

/// `(d L_N / d z_l, d L_D / d z_l)` assembled from cotangent partials.
pub fn laplacian_partials(mesh: &HalfEdgeMesh, hp: &HalfEdgePartials, l: usize) -> (CsrMatrix, CsrMatrix) {
    let mut dw = std::collections::BTreeMap::new();
    for &h in mesh.outgoing(l) {
        // every half-edge of a face incident to l has l in one of its roles
        for g in [h, mesh.next(h), mesh.next(mesh.next(h))] {
            let role = mesh.roles(g).iter().position(|&v| v == l).expect("l in face");
            *dw.entry(mesh.half_edges()[g].edge).or_insert(0.0) += 0.5 * hp.cot[g][role];
        }
    }
    let mut tn = Vec::new();
    let mut td = Vec::new();
    for (&e, &w) in &dw {
        let me = mesh.edges()[e];
        let entries = [(me.a, me.b, w), (me.b, me.a, w), (me.a, me.a, -w), (me.b, me.b, -w)];
        tn.extend_from_slice(&entries);
        if !mesh.is_boundary_vertex(me.a) && !mesh.is_boundary_vertex(me.b) {
            td.extend_from_slice(&entries);
        }
    }
    let n = mesh.vertex_count();
    (CsrMatrix::from_triplets(n, &tn), CsrMatrix::from_triplets(n, &td))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid_mesh, face_geometry, laplacians, vertex_curvatures};
    use rand::{Rng, SeedableRng};

    struct Eval {
        geom: FaceGeometry,
        lap: LaplacianPair,
        curv: VertexCurvatures,
    }

    fn eval(mesh: &HalfEdgeMesh, z: &[f64]) -> Eval {
        let geom = face_geometry(mesh, z).unwrap();
        let lap = laplacians(mesh, &geom);
        let curv = vertex_curvatures(mesh, z, &geom, &lap);
        Eval { geom, lap, curv }
    }

    fn close(analytic: f64, fd: f64) -> bool {
        let scale = analytic.abs().max(fd.abs());
        if scale < 1e-3 {
            (analytic - fd).abs() <= 1e-8
        } else {
            (analytic - fd).abs() <= 1e-5 * scale
        }
    }

    /// Compares every stored Jacobian entry with central differences.
    fn check_against_fd(mesh: &HalfEdgeMesh, z: &[f64], check_principal: bool) {
        let base = eval(mesh, z);
        let hp = half_edge_partials(mesh, z, &base.geom);
        let jac = curvature_partials(mesh, z, &base.geom, &base.lap, &base.curv, &hp);
        let step = 1e-6;
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        for l in 0..mesh.vertex_count() {
            zp[l] = z[l] + step;
            zm[l] = z[l] - step;
            let (p, m) = (eval(mesh, &zp), eval(mesh, &zm));
            zp[l] = z[l];
            zm[l] = z[l];
            let fd = |a: f64, b: f64| (a - b) / (2.0 * step);

            // half-edge primitives touching l
            for &h0 in mesh.outgoing(l) {
                for h in [h0, mesh.next(h0), mesh.next(mesh.next(h0))] {
                    let role = mesh.roles(h).iter().position(|&v| v == l).unwrap();
                    assert!(close(hp.area[h][role], fd(p.geom.area[h], m.geom.area[h])));
                    assert!(close(hp.cot[h][role], fd(p.geom.cot[h], m.geom.cot[h])));
                    assert!(close(hp.angle[h][role], fd(p.curv.angle[h], m.curv.angle[h])));
                    for c in 0..3 {
                        assert!(close(hp.normal[h][role][c], fd(p.geom.normal[h][c], m.geom.normal[h][c])));
                    }
                }
            }

            for i in 0..mesh.vertex_count() {
                let Some(idx) = jac.entry(i, l) else {
                    // outside the stencil the quantities must not move
                    assert_eq!(p.curv.gaussian[i], m.curv.gaussian[i]);
                    continue;
                };
                let pairs = [
                    ("D", jac.vertex_area[idx], fd(p.geom.vertex_area[i], m.geom.vertex_area[i])),
                    ("Ks", jac.gaussian_scaled[idx], fd(p.curv.gaussian_scaled[i], m.curv.gaussian_scaled[i])),
                    ("K", jac.gaussian[idx], fd(p.curv.gaussian[i], m.curv.gaussian[i])),
                ];
                for (name, a, f) in pairs {
                    assert!(close(a, f), "{name}[{i}] wrt z[{l}]: analytic {a}, fd {f}");
                }
                for c in 0..3 {
                    let f = fd(p.curv.mean_normal[i][c], m.curv.mean_normal[i][c]);
                    assert!(close(jac.mean_normal[idx][c], f));
                    let f = fd(p.curv.vertex_normal[i][c], m.curv.vertex_normal[i][c]);
                    assert!(close(jac.vertex_normal[idx][c], f));
                }
                // the sign of H is discontinuous where the mean-curvature normal
                // lies in the tangent plane, which happens on the flat boundary
                if !mesh.is_boundary_vertex(i) {
                    let f = fd(p.curv.mean[i], m.curv.mean[i]);
                    // |H| has a kink at zero, where central differences carry O(step) error
                    let kink = base.curv.mean[i].abs() < 1e-9 && (jac.mean[idx] - f).abs() < 1e-4;
                    assert!(kink || close(jac.mean[idx], f), "H[{i}] wrt z[{l}]: {} vs {f}", jac.mean[idx]);
                }
                if check_principal && !mesh.is_boundary_vertex(i) && !base.curv.clamped[i] {
                    let gap = base.curv.kappa_plus[i] - base.curv.kappa_minus[i];
                    if gap > 1e-2 {
                        let f = fd(p.curv.kappa_plus[i], m.curv.kappa_plus[i]);
                        assert!(close(jac.kappa_plus[idx], f), "k+[{i}] wrt z[{l}]: {} vs {f}", jac.kappa_plus[idx]);
                        let f = fd(p.curv.kappa_minus[i], m.curv.kappa_minus[i]);
                        assert!(close(jac.kappa_minus[idx], f));
                    }
                }
            }

            let (dn, dd) = laplacian_partials(mesh, &hp, l);
            for i in 0..mesh.vertex_count() {
                for &j in mesh.stencil(i) {
                    let f = fd(p.lap.neumann.get(i, j), m.lap.neumann.get(i, j));
                    assert!(close(dn.get(i, j), f));
                    let f = fd(p.lap.dirichlet.get(i, j), m.lap.dirichlet.get(i, j));
                    assert!(close(dd.get(i, j), f));
                }
            }
        }
    }

    #[test]
    fn position_partial_is_unit_vertical() {
        // d v_i / d z_l = e3 iff l = i: check through the mesh position helper
        let m = build_grid_mesh(3, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let z = vec![0.0; 9];
        let mut z2 = z.clone();
        z2[4] = 1.0;
        for i in 0..9 {
            let d = super::super::sub(m.position(i, &z2), m.position(i, &z));
            assert_eq!(d, if i == 4 { [0.0, 0.0, 1.0] } else { [0.0; 3] });
        }
    }

    #[test]
    fn flat_mesh_partials_match_fd() {
        let m = build_grid_mesh(5, [-0.1, -0.1, 1.1, 1.1]).unwrap();
        check_against_fd(&m, &vec![0.0; m.vertex_count()], false);
    }

    #[test]
    fn random_mesh_partials_match_fd() {
        let m = build_grid_mesh(10, [-0.1, -0.1, 1.1, 1.1]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let z: Vec<f64> = (0..m.vertex_count()).map(|_| rng.random_range(-0.03..0.03)).collect();
        check_against_fd(&m, &z, true);
    }
}
