use std::f64::consts::PI;

use super::{dot, FaceGeometry, HalfEdgeMesh, LaplacianPair};
use crate::par;

/// Per-vertex curvature quantities.
///
/// Boundary vertices report an angle defect against `pi` instead of `2 pi`;
/// their values are informational and never enter the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCurvatures {
    /// Interior angle of each half-edge's triangle at its opposite vertex.
    pub angle: Vec<f64>,
    /// Angle defect (Gaussian curvature scaled by vertex area).
    pub gaussian_scaled: Vec<f64>,
    pub gaussian: Vec<f64>,
    /// Sum of the (area-weighted) normals of incident triangles.
    pub vertex_normal: Vec<[f64; 3]>,
    /// `(L_N v)_i`, the unnormalized Laplacian of the position.
    pub laplace_position: Vec<[f64; 3]>,
    /// Mean-curvature normal `-1/2 D^-1 L_N v`.
    pub mean_normal: Vec<[f64; 3]>,
    pub mean: Vec<f64>,
    pub kappa_plus: Vec<f64>,
    pub kappa_minus: Vec<f64>,
    /// Vertices where `H^2 - K < 0` and the square root was clamped to zero.
    pub clamped: Vec<bool>,
}

pub fn vertex_curvatures(
    mesh: &HalfEdgeMesh,
    z: &[f64],
    geom: &FaceGeometry,
    lap: &LaplacianPair,
) -> VertexCurvatures {
    let angle: Vec<f64> = geom
        .area
        .iter()
        .zip(&geom.cot)
        .map(|(&a, &c)| (2.0 * a).atan2(c * 2.0 * a))
        .collect();

    struct Row {
        ks: f64,
        k: f64,
        n: [f64; 3],
        lv: [f64; 3],
        hn: [f64; 3],
        h: f64,
        kp: f64,
        km: f64,
        clamped: bool,
    }
    let rows = par::map_indices(mesh.vertex_count(), |i| {
        let full = if mesh.is_boundary_vertex(i) { PI } else { 2.0 * PI };
        let out = mesh.outgoing(i);
        let ks = full - out.iter().map(|&h| angle[mesh.next(h)]).sum::<f64>();
        let d = geom.vertex_area[i];
        let k = ks / d;
        let mut n = [0.0; 3];
        for &h in out {
            for c in 0..3 {
                n[c] += geom.normal[h][c];
            }
        }
        let vi = mesh.position(i, z);
        let mut lv = [0.0; 3];
        for &e in mesh.vertex_edges(i) {
            let me = mesh.edges()[e];
            let j = if me.a == i { me.b } else { me.a };
            let vj = mesh.position(j, z);
            let w = lap.edge_weight[e];
            for c in 0..3 {
                lv[c] += w * (vj[c] - vi[c]);
            }
        }
        let hn = lv.map(|x| -0.5 * x / d);
        let h = sign(dot(n, hn)) * dot(hn, hn).sqrt();
        let disc = h * h - k;
        let clamped = disc < 0.0;
        let s = disc.max(0.0).sqrt();
        Row { ks, k, n, lv, hn, h, kp: h + s, km: h - s, clamped }
    });

    let mut out = VertexCurvatures {
        angle,
        gaussian_scaled: Vec::with_capacity(rows.len()),
        gaussian: Vec::with_capacity(rows.len()),
        vertex_normal: Vec::with_capacity(rows.len()),
        laplace_position: Vec::with_capacity(rows.len()),
        mean_normal: Vec::with_capacity(rows.len()),
        mean: Vec::with_capacity(rows.len()),
        kappa_plus: Vec::with_capacity(rows.len()),
        kappa_minus: Vec::with_capacity(rows.len()),
        clamped: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        out.gaussian_scaled.push(r.ks);
        out.gaussian.push(r.k);
        out.vertex_normal.push(r.n);
        out.laplace_position.push(r.lv);
        out.mean_normal.push(r.hn);
        out.mean.push(r.h);
        out.kappa_plus.push(r.kp);
        out.kappa_minus.push(r.km);
        out.clamped.push(r.clamped);
    }
    out
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
