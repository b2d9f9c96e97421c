//! Curvature and smoothness losses over mesh heights, with gradients.
//!
//! The curvature loss compares each graph edge's Ricci curvature with the
//! Gaussian curvature at mesh vertices in the edge's ball (a tube of radius
//! `r` around the projected edge). The smoothness loss penalizes variation
//! of the principal curvatures through the Dirichlet Laplacian, scaled by
//! total surface area.

use serde::{Deserialize, Serialize};

use crate::mesh::{
    curvature_partials, face_geometry, half_edge_partials, laplacians, vertex_curvatures, CurvaturePartials,
    FaceGeometry, HalfEdgeMesh, HalfEdgePartials, LaplacianPair, VertexCurvatures,
};
use crate::netgraph::DelayGraph;
use crate::{par, Error, Result};

pub const DEFAULT_LAMBDA_SMOOTH: f64 = 0.001;

/// How per-edge ball averages are combined into the curvature loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureLossVariant {
    /// Each edge weighted by its projected length, normalized by total length.
    #[default]
    LengthWeighted,
    /// Each edge weighted by `1 / |E|`.
    Uniform,
}

impl std::str::FromStr for CurvatureLossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length-weighted" => Ok(Self::LengthWeighted),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown curvature loss variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub epsilon_ms: f64,
    pub lambda_smooth: f64,
    /// Edge-ball radius in normalized planar units.
    pub ball_radius: f64,
    pub variant: CurvatureLossVariant,
}

impl LossParams {
    /// Defaults for `mesh`: `r` is the longest flat-mesh edge.
    pub fn for_mesh(mesh: &HalfEdgeMesh, epsilon_ms: f64) -> Self {
        LossParams {
            epsilon_ms,
            lambda_smooth: DEFAULT_LAMBDA_SMOOTH,
            ball_radius: mesh.longest_flat_edge(),
            variant: CurvatureLossVariant::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_smooth >= 0.0 && self.lambda_smooth.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda_smooth = {}", self.lambda_smooth)));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball radius = {}", self.ball_radius)));
        }
        Ok(())
    }
}

/// Interior mesh vertices strictly within `r` of the segment `a`-`b`: inside
/// either endpoint disk, or projecting onto the open segment at distance
/// below `r`.
pub fn edge_ball(mesh: &HalfEdgeMesh, a: [f64; 2], b: [f64; 2], r: f64) -> Vec<usize> {
    let lo = [a[0].min(b[0]) - r, a[1].min(b[1]) - r];
    let hi = [a[0].max(b[0]) + r, a[1].max(b[1]) + r];
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len = ab[0].hypot(ab[1]);
    let mut ball: Vec<usize> = mesh
        .vertices_in_rect(lo, hi)
        .into_iter()
        .filter(|&v| !mesh.is_boundary_vertex(v))
        .filter(|&v| {
            let p = mesh.xy()[v];
            let pa = [p[0] - a[0], p[1] - a[1]];
            let pb = [p[0] - b[0], p[1] - b[1]];
            if pa[0].hypot(pa[1]) < r || pb[0].hypot(pb[1]) < r {
                return true;
            }
            if len == 0.0 {
                return false;
            }
            let ahead = pa[0] * ab[0] + pa[1] * ab[1] > 0.0;
            let behind = -(pb[0] * ab[0] + pb[1] * ab[1]) > 0.0;
            let off_line = (pa[0] * ab[1] - pa[1] * ab[0]).abs() / len;
            ahead && behind && off_line < r
        })
        .collect();
    ball.sort_unstable();
    ball
}

/// Ball of graph edge `(u, v)` given projected vertex positions; an empty
/// ball is an error.
pub fn graph_edge_ball(mesh: &HalfEdgeMesh, positions: &[[f64; 2]], u: usize, v: usize, r: f64) -> Result<Vec<usize>> {
    for &x in &[u, v] {
        let p = positions[x];
        if !mesh.contains(p) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
    }
    let ball = edge_ball(mesh, positions[u], positions[v], r);
    if ball.is_empty() {
        return Err(Error::EmptyEdgeBall(u, v));
    }
    Ok(ball)
}

/// One graph edge's contribution to the curvature loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTarget {
    pub u: usize,
    pub v: usize,
    pub ricci: f64,
    pub length: f64,
    pub ball: Vec<usize>,
    /// Factor applied to each squared mismatch in the ball.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub curvature_loss: f64,
    pub smoothness_loss: f64,
    pub total: f64,
    pub gradient: Vec<f64>,
    pub curvature_gradient: Vec<f64>,
    pub smoothness_gradient: Vec<f64>,
    pub ball_sizes: Vec<usize>,
}

/// Everything a mesh operator evaluation produces at one height vector.
pub struct MeshState {
    pub geometry: FaceGeometry,
    pub laplacians: LaplacianPair,
    pub curvatures: VertexCurvatures,
}

impl MeshState {
    pub fn new(mesh: &HalfEdgeMesh, z: &[f64]) -> Result<Self> {
        if z.len() != mesh.vertex_count() {
            return Err(Error::DimensionMismatch { expected: mesh.vertex_count(), got: z.len() });
        }
        let geometry = face_geometry(mesh, z)?;
        let laplacians = laplacians(mesh, &geometry);
        let curvatures = vertex_curvatures(mesh, z, &geometry, &laplacians);
        Ok(MeshState { geometry, laplacians, curvatures })
    }
}

/// Edge balls and weights precomputed for a fixed mesh, graph and params.
#[derive(Debug, Clone)]
pub struct LossProblem<'a> {
    mesh: &'a HalfEdgeMesh,
    params: LossParams,
    targets: Vec<EdgeTarget>,
}

impl<'a> LossProblem<'a> {
    /// `positions[i]` is the projected planar position of graph vertex `i`.
    pub fn new(mesh: &'a HalfEdgeMesh, graph: &DelayGraph, positions: &[[f64; 2]], params: LossParams) -> Result<Self> {
        params.validate()?;
        if positions.len() != graph.vertex_count() {
            return Err(Error::DimensionMismatch { expected: graph.vertex_count(), got: positions.len() });
        }
        let mut targets = Vec::with_capacity(graph.edges.len());
        for e in &graph.edges {
            let ricci = e
                .ricci
                .ok_or_else(|| Error::InvalidParameter(format!("edge ({}, {}) has no curvature", e.u, e.v)))?;
            let ball = graph_edge_ball(mesh, positions, e.u, e.v, params.ball_radius)?;
            let (a, b) = (positions[e.u], positions[e.v]);
            let length = (b[0] - a[0]).hypot(b[1] - a[1]);
            targets.push(EdgeTarget { u: e.u, v: e.v, ricci, length, ball, coefficient: 0.0 });
        }
        let total_length: f64 = targets.iter().map(|t| t.length).sum();
        let edge_count = targets.len() as f64;
        for t in &mut targets {
            let edge_weight = match params.variant {
                CurvatureLossVariant::LengthWeighted => {
                    if total_length > 0.0 {
                        t.length / total_length
                    } else {
                        // every edge collapsed to a point: fall back to equal weights
                        1.0 / edge_count
                    }
                }
                CurvatureLossVariant::Uniform => 1.0 / edge_count,
            };
            t.coefficient = edge_weight / t.ball.len() as f64;
        }
        Ok(LossProblem { mesh, params, targets })
    }

    pub fn mesh(&self) -> &HalfEdgeMesh {
        self.mesh
    }

    pub fn params(&self) -> &LossParams {
        &self.params
    }

    pub fn targets(&self) -> &[EdgeTarget] {
        &self.targets
    }

    /// Curvature loss and its derivative with respect to each vertex's
    /// Gaussian curvature.
    fn curvature_term(&self, gaussian: &[f64]) -> (f64, Vec<f64>) {
        let parts = par::map_slice(&self.targets, |t| {
            let mut loss = 0.0;
            let mut bar = Vec::with_capacity(t.ball.len());
            for &k in &t.ball {
                let diff = t.ricci - gaussian[k];
                loss += t.coefficient * diff * diff;
                bar.push(-2.0 * t.coefficient * diff);
            }
            (loss, bar)
        });
        let mut loss = 0.0;
        let mut bar_k = vec![0.0; gaussian.len()];
        for (t, (l, bar)) in self.targets.iter().zip(parts) {
            loss += l;
            for (&k, b) in t.ball.iter().zip(bar) {
                bar_k[k] += b;
            }
        }
        (loss, bar_k)
    }

    pub fn curvature_loss(&self, state: &MeshState) -> f64 {
        self.curvature_term(&state.curvatures.gaussian).0
    }

    /// Loss values only: `(curvature, smoothness, total)`.
    pub fn value(&self, z: &[f64]) -> Result<(f64, f64, f64)> {
        let state = MeshState::new(self.mesh, z)?;
        let c = self.curvature_loss(&state);
        let s = smoothness_loss(self.mesh, z, &state.laplacians, &state.curvatures);
        Ok((c, s, c + self.params.lambda_smooth * s))
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<LossReport> {
        let mesh = self.mesh;
        let state = MeshState::new(mesh, z)?;
        let MeshState { geometry, laplacians: lap, curvatures: curv } = &state;
        let hp = half_edge_partials(mesh, z, geometry);
        let jac = curvature_partials(mesh, z, geometry, lap, curv, &hp);
        let n = mesh.vertex_count();

        let (curvature_loss, bar_k) = self.curvature_term(&curv.gaussian);
        let mut curvature_gradient = vec![0.0; n];
        scatter(&jac, &jac.gaussian, &bar_k, &mut curvature_gradient);

        let (smoothness_loss, smoothness_gradient) = smoothness_and_gradient(mesh, z, lap, curv, &hp, &jac);

        let lambda = self.params.lambda_smooth;
        let total = curvature_loss + lambda * smoothness_loss;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let gradient = curvature_gradient
            .iter()
            .zip(&smoothness_gradient)
            .map(|(c, s)| c + lambda * s)
            .collect();
        Ok(LossReport {
            curvature_loss,
            smoothness_loss,
            total,
            gradient,
            curvature_gradient,
            smoothness_gradient,
            ball_sizes: self.targets.iter().map(|t| t.ball.len()).collect(),
        })
    }
}

/// `out[l] += sum_i bar[i] * d q_i / d z_l` for one Jacobian quantity.
fn scatter(jac: &CurvaturePartials, values: &[f64], bar: &[f64], out: &mut [f64]) {
    for (i, &b) in bar.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for idx in jac.row(i) {
            out[jac.col(idx)] += b * values[idx];
        }
    }
}

/// `x^T L_D x = -sum over interior edges of w (x_a - x_b)^2`.
fn dirichlet_form(mesh: &HalfEdgeMesh, lap: &LaplacianPair, x: &[f64]) -> f64 {
    interior_edges(mesh)
        .map(|e| {
            let me = mesh.edges()[e];
            -lap.edge_weight[e] * (x[me.a] - x[me.b]).powi(2)
        })
        .sum()
}

fn interior_edges(mesh: &HalfEdgeMesh) -> impl Iterator<Item = usize> + '_ {
    mesh.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| !mesh.is_boundary_vertex(e.a) && !mesh.is_boundary_vertex(e.b))
        .map(|(i, _)| i)
}

/// `-(k+^T L_D k+ + k-^T L_D k-) * A` with `A` the total surface area.
pub fn smoothness_loss(mesh: &HalfEdgeMesh, z: &[f64], lap: &LaplacianPair, curv: &VertexCurvatures) -> f64 {
    let s = dirichlet_form(mesh, lap, &curv.kappa_plus) + dirichlet_form(mesh, lap, &curv.kappa_minus);
    -s * mesh.surface_area(z)
}

fn smoothness_and_gradient(
    mesh: &HalfEdgeMesh,
    z: &[f64],
    lap: &LaplacianPair,
    curv: &VertexCurvatures,
    hp: &HalfEdgePartials,
    jac: &CurvaturePartials,
) -> (f64, Vec<f64>) {
    let n = mesh.vertex_count();
    let area = mesh.surface_area(z);
    let (kp, km) = (&curv.kappa_plus, &curv.kappa_minus);
    let s = dirichlet_form(mesh, lap, kp) + dirichlet_form(mesh, lap, km);
    let loss = -s * area;
    let mut grad = vec![0.0; n];

    // through the principal curvatures: d/dk (x^T L x) = 2 L x
    let mut lx_p = vec![0.0; n];
    let mut lx_m = vec![0.0; n];
    for e in interior_edges(mesh) {
        let me = mesh.edges()[e];
        let w = lap.edge_weight[e];
        let (dp, dm) = (kp[me.b] - kp[me.a], km[me.b] - km[me.a]);
        lx_p[me.a] += w * dp;
        lx_p[me.b] -= w * dp;
        lx_m[me.a] += w * dm;
        lx_m[me.b] -= w * dm;
        // through the Laplacian weights
        let bar_w = area * (dp * dp + dm * dm);
        for h in me.half_edges() {
            for (role, v) in mesh.roles(h).into_iter().enumerate() {
                grad[v] += bar_w * 0.5 * hp.cot[h][role];
            }
        }
    }
    let bar_p: Vec<f64> = lx_p.iter().map(|x| -2.0 * area * x).collect();
    let bar_m: Vec<f64> = lx_m.iter().map(|x| -2.0 * area * x).collect();
    scatter(jac, &jac.kappa_plus, &bar_p, &mut grad);
    scatter(jac, &jac.kappa_minus, &bar_m, &mut grad);

    // through the surface area, one half-edge per face
    for f in 0..mesh.faces().len() {
        let h = 3 * f;
        for (role, v) in mesh.roles(h).into_iter().enumerate() {
            grad[v] += -s * hp.area[h][role];
        }
    }
    (loss, grad)
}

/// Curvature loss at heights `z`.
pub fn curvature_loss(
    mesh: &HalfEdgeMesh,
    graph: &DelayGraph,
    positions: &[[f64; 2]],
    params: LossParams,
    z: &[f64],
) -> Result<f64> {
    let problem = LossProblem::new(mesh, graph, positions, params)?;
    Ok(problem.curvature_loss(&MeshState::new(mesh, z)?))
}

pub fn total_loss_and_gradient(
    mesh: &HalfEdgeMesh,
    graph: &DelayGraph,
    positions: &[[f64; 2]],
    params: LossParams,
    z: &[f64],
) -> Result<LossReport> {
    LossProblem::new(mesh, graph, positions, params)?.evaluate(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid_mesh, init_sphere_cap};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOUNDS: [f64; 4] = [-0.1, -0.1, 1.1, 1.1];

    fn graph_with(edges: &[(usize, usize, f64)], n: usize) -> DelayGraph {
        let pairs: Vec<_> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
        let mut g = DelayGraph::anonymous(n, &pairs);
        for e in &mut g.edges {
            let k = edges.iter().find(|t| (t.0.min(t.1), t.0.max(t.1)) == (e.u, e.v)).unwrap().2;
            e.ricci = Some(k);
        }
        g
    }

    fn square_graph() -> (DelayGraph, Vec<[f64; 2]>) {
        let g = graph_with(&[(0, 1, 0.5), (1, 2, -0.4), (2, 3, 0.3), (0, 3, -0.8), (0, 2, 0.2)], 4);
        (g, vec![[0.2, 0.25], [0.8, 0.2], [0.75, 0.8], [0.3, 0.7]])
    }

    fn brute_ball(mesh: &HalfEdgeMesh, a: [f64; 2], b: [f64; 2], r: f64) -> Vec<usize> {
        (0..mesh.vertex_count())
            .filter(|&v| !mesh.is_boundary_vertex(v))
            .filter(|&v| {
                let p = mesh.xy()[v];
                // distance to the closed segment via the clamped projection
                let ab = [b[0] - a[0], b[1] - a[1]];
                let len2 = ab[0] * ab[0] + ab[1] * ab[1];
                let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) };
                let d = (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1]);
                d < r
            })
            .collect()
    }

    #[test]
    fn edge_ball_membership() {
        let m = build_grid_mesh(13, BOUNDS).unwrap();
        let r = m.longest_flat_edge();
        let (a, b) = ([0.23, 0.31], [0.77, 0.58]);
        let ball = edge_ball(&m, a, b, r);
        for v in brute_ball(&m, a, b, r) {
            assert!(ball.contains(&v));
        }
        for &v in &ball {
            assert!(!m.is_boundary_vertex(v));
        }
        // vertices exactly at distance r are excluded
        let unit = build_grid_mesh(5, [0.0, 0.0, 4.0, 4.0]).unwrap();
        assert_eq!(edge_ball(&unit, [2.0, 2.0], [2.0, 2.0], 1.0), vec![12]);
        assert_eq!(edge_ball(&unit, [1.0, 2.0], [3.0, 2.0], 1.0), vec![11, 12, 13]);
        assert!(matches!(
            graph_edge_ball(&m, &[[0.05, 0.05], [0.05, 0.05]], 0, 1, 1e-3),
            Err(Error::EmptyEdgeBall(0, 1))
        ));
    }

    #[test]
    fn edge_ball_grows_linearly_along_grid_rows() {
        let m = build_grid_mesh(41, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = m.longest_flat_edge();
        // offset from the grid rows so no vertex sits exactly at distance r
        let y = m.xy()[20 * 41][1] + 0.3 * m.pitch()[1];
        let sizes: Vec<usize> = (1..=20)
            .map(|span| {
                let (x0, x1) = (m.xy()[10][0], m.xy()[10 + span][0]);
                let ball = edge_ball(&m, [x0, y], [x1, y], r);
                assert_eq!(ball, brute_ball(&m, [x0, y], [x1, y], r));
                ball.len()
            })
            .collect();
        // every extra column adds the three rows within r of the segment
        assert!(sizes.windows(2).all(|w| w[1] - w[0] == 3), "{sizes:?}");
    }

    #[test]
    fn flat_mesh_losses() {
        let m = build_grid_mesh(12, BOUNDS).unwrap();
        let z = vec![0.0; m.vertex_count()];
        let pos = vec![[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]];
        let zero = graph_with(&[(0, 1, 0.0), (1, 2, 0.0)], 3);
        let params = LossParams::for_mesh(&m, 10.0);
        let r = total_loss_and_gradient(&m, &zero, &pos, params, &z).unwrap();
        assert!(r.total.abs() < 1e-12);
        assert!(r.gradient.iter().all(|g| g.abs() < 1e-12));

        for variant in [CurvatureLossVariant::LengthWeighted, CurvatureLossVariant::Uniform] {
            let single = graph_with(&[(0, 1, 0.37)], 3);
            let p = LossParams { variant, ..params };
            let l = curvature_loss(&m, &single, &pos, p, &z).unwrap();
            assert!((l - 0.37 * 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn length_weighting_by_hand() {
        // edges of projected lengths 0.2 and 0.6 (ratio 1:3) over a flat mesh
        let m = build_grid_mesh(15, BOUNDS).unwrap();
        let z = vec![0.0; m.vertex_count()];
        let pos = vec![[0.1, 0.2], [0.3, 0.2], [0.2, 0.7], [0.8, 0.7]];
        let (d1, d2) = (0.4, -1.1);
        let g = graph_with(&[(0, 1, d1), (2, 3, d2)], 4);
        let params = LossParams::for_mesh(&m, 1.0);
        let lw = curvature_loss(&m, &g, &pos, params, &z).unwrap();
        assert!((lw - (d1 * d1 + 3.0 * d2 * d2) / 4.0).abs() < 1e-12);
        let uni = curvature_loss(&m, &g, &pos, LossParams { variant: CurvatureLossVariant::Uniform, ..params }, &z).unwrap();
        assert!((uni - (d1 * d1 + d2 * d2) / 2.0).abs() < 1e-12);
        let same = graph_with(&[(0, 1, d1), (2, 3, d1)], 4);
        assert!((curvature_loss(&m, &same, &pos, params, &z).unwrap() - d1 * d1).abs() < 1e-12);
    }

    fn fd_check(problem: &LossProblem, z: &[f64]) {
        let report = problem.evaluate(z).unwrap();
        // Richardson-extrapolated central differences: the curvature terms have
        // large third derivatives, which swamp plain differences at 1e-6
        let step = 1e-5;
        let mut zz = z.to_vec();
        let mut worst: f64 = 0.0;
        let mut central = |l: usize, h: f64| {
            zz[l] = z[l] + h;
            let p = problem.value(&zz).unwrap();
            zz[l] = z[l] - h;
            let m = problem.value(&zz).unwrap();
            zz[l] = z[l];
            [(p.0 - m.0) / (2.0 * h), (p.1 - m.1) / (2.0 * h), (p.2 - m.2) / (2.0 * h)]
        };
        for l in 0..z.len() {
            let (coarse, fine) = (central(l, step), central(l, step / 2.0));
            let fds: [f64; 3] = std::array::from_fn(|c| (4.0 * fine[c] - coarse[c]) / 3.0);
            let an = [report.curvature_gradient[l], report.smoothness_gradient[l], report.gradient[l]];
            for (a, f) in an.into_iter().zip(fds) {
                let scale = a.abs().max(f.abs());
                let err = (a - f).abs();
                if scale < 1e-3 {
                    assert!(err <= 1e-8, "z[{l}]: analytic {a}, fd {f}");
                } else {
                    assert!(err <= 1e-5 * scale, "z[{l}]: analytic {an:?}, fd {fds:?}");
                    worst = worst.max(err / scale);
                }
            }
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = build_grid_mesh(10, BOUNDS).unwrap();
        let (g, pos) = square_graph();
        for (seed, variant) in [(1, CurvatureLossVariant::LengthWeighted), (2, CurvatureLossVariant::Uniform)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = init_sphere_cap(&m, 0.1).unwrap();
            let z: Vec<f64> = base.iter().map(|b| b + rng.random_range(-0.01..0.01)).collect();
            let params = LossParams { lambda_smooth: 0.5, variant, ..LossParams::for_mesh(&m, 5.0) };
            let problem = LossProblem::new(&m, &g, &pos, params).unwrap();
            fd_check(&problem, &z);
        }
    }

    #[test]
    fn vertical_translation_invariance_and_lambda_linearity() {
        let m = build_grid_mesh(10, BOUNDS).unwrap();
        let (g, pos) = square_graph();
        let z = init_sphere_cap(&m, 0.2).unwrap();
        let params = LossParams::for_mesh(&m, 5.0);
        let problem = LossProblem::new(&m, &g, &pos, params).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + 3.7).collect();
        let (a, b) = (problem.value(&z).unwrap(), problem.value(&shifted).unwrap());
        assert!((a.0 - b.0).abs() < 1e-10);
        assert!((a.1 - b.1).abs() < 1e-10);

        let r1 = problem.evaluate(&z).unwrap();
        let doubled = LossProblem::new(&m, &g, &pos, LossParams { lambda_smooth: 2.0 * params.lambda_smooth, ..params }).unwrap();
        let r2 = doubled.evaluate(&z).unwrap();
        assert_eq!(r1.curvature_loss, r2.curvature_loss);
        assert_eq!(r1.smoothness_loss, r2.smoothness_loss);
        assert!((r2.total - (r2.curvature_loss + 2.0 * params.lambda_smooth * r2.smoothness_loss)).abs() < 1e-12);
        assert_eq!(r1.curvature_gradient, r2.curvature_gradient);
        for i in 0..z.len() {
            let want = r1.gradient[i] + params.lambda_smooth * r1.smoothness_gradient[i];
            assert!((r2.gradient[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn smoothness_on_caps() {
        let m = build_grid_mesh(40, BOUNDS).unwrap();
        let cap = crate::mesh::sphere_cap_with_radius(&m, 2.0).unwrap();
        let smooth = MeshState::new(&m, &cap).unwrap();
        let s_cap = smoothness_loss(&m, &cap, &smooth.laplacians, &smooth.curvatures);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<f64> = cap.iter().map(|v| v + rng.random_range(-0.002..0.002)).collect();
        let ns = MeshState::new(&m, &noisy).unwrap();
        let s_noisy = smoothness_loss(&m, &noisy, &ns.laplacians, &ns.curvatures);
        assert!(s_cap >= 0.0 && s_noisy >= 0.0);
        assert!(s_cap < 1e-3 * s_noisy, "{s_cap} vs {s_noisy}");
        let flat = vec![0.0; m.vertex_count()];
        let fs = MeshState::new(&m, &flat).unwrap();
        assert!(smoothness_loss(&m, &flat, &fs.laplacians, &fs.curvatures) < 1e-9);
    }

    #[test]
    fn missing_curvature_is_an_error() {
        let m = build_grid_mesh(10, BOUNDS).unwrap();
        let g = DelayGraph::anonymous(2, &[(0, 1)]);
        let params = LossParams::for_mesh(&m, 1.0);
        assert!(LossProblem::new(&m, &g, &[[0.2, 0.2], [0.8, 0.8]], params).is_err());
        assert!(LossParams { ball_radius: 0.0, ..params }.validate().is_err());
        assert!(LossParams { lambda_smooth: -1.0, ..params }.validate().is_err());
    }
}
