use super::{cross, dot, norm, sub, HalfEdgeMesh};
use crate::sparse::CsrMatrix;
use crate::{par, Error, Result};

/// Triangles with less area than this (normalized units) are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-15;

/// Per-half-edge triangle quantities. For half-edge `h = (i, j)` with
/// opposite vertex `n`, `normal[h] = (v_i - v_n) x (v_j - v_n)`, `area[h]` is
/// the triangle area and `cot[h]` the cotangent of the angle at `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    pub normal: Vec<[f64; 3]>,
    pub area: Vec<f64>,
    pub cot: Vec<f64>,
    /// Barycentric vertex areas (the diagonal of `D`).
    pub vertex_area: Vec<f64>,
}

pub fn face_geometry(mesh: &HalfEdgeMesh, z: &[f64]) -> Result<FaceGeometry> {
    let nh = mesh.half_edges().len();
    let per_h = par::map_indices(nh, |h| {
        let [i, j, n] = mesh.roles(h);
        let (vi, vj, vn) = (mesh.position(i, z), mesh.position(j, z), mesh.position(n, z));
        let (a, b) = (sub(vi, vn), sub(vj, vn));
        let normal = cross(a, b);
        let area = 0.5 * norm(normal);
        (normal, area, dot(a, b) / (2.0 * area))
    });
    let mut geom = FaceGeometry {
        normal: Vec::with_capacity(nh),
        area: Vec::with_capacity(nh),
        cot: Vec::with_capacity(nh),
        vertex_area: vec![0.0; mesh.vertex_count()],
    };
    for (h, (normal, area, cot)) in per_h.into_iter().enumerate() {
        if !(area >= MIN_TRIANGLE_AREA) {
            return Err(Error::DegenerateTriangle { face: h / 3, area });
        }
        geom.normal.push(normal);
        geom.area.push(area);
        geom.cot.push(cot);
    }
    for (i, d) in geom.vertex_area.iter_mut().enumerate() {
        *d = mesh.outgoing(i).iter().map(|&h| geom.area[h]).sum::<f64>() / 3.0;
    }
    Ok(geom)
}

/// Cotangent Laplacians under the sign convention where the diagonal is the
/// negated sum of the off-diagonals, so both operators are negative
/// semidefinite when all edge weights are non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    /// Zero-Neumann operator: every mesh edge contributes.
    pub neumann: CsrMatrix,
    /// Zero-Dirichlet operator: only edges joining two interior vertices;
    /// boundary rows and columns are empty.
    pub dirichlet: CsrMatrix,
    /// Off-diagonal weight per undirected mesh edge: half the sum of the
    /// cotangents opposite the edge (a single cotangent on the boundary).
    pub edge_weight: Vec<f64>,
}

pub fn laplacians(mesh: &HalfEdgeMesh, geom: &FaceGeometry) -> LaplacianPair {
    let edge_weight: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|e| 0.5 * e.half_edges().map(|h| geom.cot[h]).sum::<f64>())
        .collect();
    let n = mesh.vertex_count();
    let mut tn = Vec::with_capacity(4 * edge_weight.len());
    let mut td = Vec::with_capacity(4 * edge_weight.len());
    for (e, &w) in mesh.edges().iter().zip(&edge_weight) {
        let entries = [(e.a, e.b, w), (e.b, e.a, w), (e.a, e.a, -w), (e.b, e.b, -w)];
        tn.extend_from_slice(&entries);
        if !mesh.is_boundary_vertex(e.a) && !mesh.is_boundary_vertex(e.b) {
            td.extend_from_slice(&entries);
        }
    }
    LaplacianPair {
        neumann: CsrMatrix::from_triplets(n, &tn),
        dirichlet: CsrMatrix::from_triplets(n, &td),
        edge_weight,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid_mesh;
    use rand::{Rng, SeedableRng};

    fn triangle_mesh(pts: [[f64; 3]; 3]) -> (f64, f64, f64) {
        // cotangents at each corner of one triangle, via the half-edge formula
        let cot_at = |n: usize| {
            let (i, j) = ((n + 1) % 3, (n + 2) % 3);
            let (a, b) = (sub(pts[i], pts[n]), sub(pts[j], pts[n]));
            dot(a, b) / norm(cross(a, b))
        };
        (cot_at(0), cot_at(1), cot_at(2))
    }

    #[test]
    fn cotangent_reference_triangles() {
        let (c0, _, _) = triangle_mesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(c0.abs() < 1e-15);
        let s3 = 3f64.sqrt();
        let (a, b, c) = triangle_mesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, s3 / 2.0, 0.0]]);
        for v in [a, b, c] {
            assert!((v - 1.0 / s3).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_grid_vertex_area() {
        let m = build_grid_mesh(3, [0.0, 0.0, 2.0, 2.0]).unwrap();
        let g = face_geometry(&m, &vec![0.0; 9]).unwrap();
        let cell_area = 1.0;
        assert!((g.vertex_area[4] - cell_area).abs() < 1e-15);
        // the cotangent at the right angle of each grid triangle vanishes
        for h in 0..m.half_edges().len() {
            let [i, j, _] = m.roles(h);
            let (pi, pj) = (m.xy()[i], m.xy()[j]);
            let diagonal = (pi[0] - pj[0]).abs() > 0.0 && (pi[1] - pj[1]).abs() > 0.0;
            if diagonal {
                assert!(g.cot[h].abs() < 1e-15);
            } else {
                assert!((g.cot[h] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let m = build_grid_mesh(2, [0.0, 0.0, 1e-9, 1e-9]).unwrap();
        assert!(matches!(face_geometry(&m, &[0.0; 4]), Err(Error::DegenerateTriangle { .. })));
    }

    #[test]
    fn flat_laplacian_properties() {
        let m = build_grid_mesh(7, [-0.1, -0.1, 1.1, 1.1]).unwrap();
        let z = vec![0.0; m.vertex_count()];
        let lap = laplacians(&m, &face_geometry(&m, &z).unwrap());
        for i in 0..m.vertex_count() {
            assert!(lap.neumann.row_sum(i).abs() < 1e-12);
        }
        assert!(lap.neumann.mul_vec(&vec![3.5; m.vertex_count()]).iter().all(|v| v.abs() < 1e-12));
        let lin: Vec<f64> = m.xy().iter().map(|p| 0.7 * p[0] - 1.3 * p[1] + 0.2).collect();
        let out = lap.neumann.mul_vec(&lin);
        for i in 0..m.vertex_count() {
            if !m.is_boundary_vertex(i) {
                assert!(out[i].abs() < 1e-10);
            } else {
                assert!(lap.dirichlet.row(i).next().is_none());
            }
        }
    }

    #[test]
    fn laplacians_symmetric_negative_semidefinite() {
        let m = build_grid_mesh(8, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..m.vertex_count()).map(|_| rng.random_range(-0.02..0.02)).collect();
        let lap = laplacians(&m, &face_geometry(&m, &z).unwrap());
        assert!(lap.neumann.is_symmetric(0.0));
        assert!(lap.dirichlet.is_symmetric(0.0));
        for _ in 0..20 {
            let x: Vec<f64> = (0..m.vertex_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(lap.neumann.quadratic_form(&x) <= 1e-12);
            assert!(lap.dirichlet.quadratic_form(&x) <= 1e-12);
        }
    }
}
