//! End-to-end orchestration: measurements in, one manifold artifact per
//! `(epsilon, lambda_smooth)` sweep point out.
//!
//! Stages run in order ingest, cluster, projection, mesh, threshold, ricci,
//! loss, optimize, postprocess, report; any failure is wrapped in
//! [`Error::Stage`] naming the stage. Output depends only on the config and
//! the measurements, never on thread count or the clock.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::artifact::{
    ArtifactEdge, ArtifactMetadata, ArtifactReports, ArtifactVertex, GraphData, ManifoldArtifact, MeshData,
    SCHEMA_VERSION,
};
use crate::geo::{Projection, ProjectionKind, DEFAULT_MARGIN};
use crate::geodesic::DEFAULT_SUBDIVISION;
use crate::loss::{CurvatureLossVariant, LossParams, LossProblem, DEFAULT_LAMBDA_SMOOTH};
use crate::mesh::{build_grid_mesh, init_sphere_cap, HalfEdgeMesh};
use crate::netgraph::{
    cluster_vantage_points, epsilon_first_appearance, load_path, threshold_graph, DelayGraph, LatencyMatrix,
    ResidualMode,
};
use crate::optimize::{flatten_exterior, optimize_heights, subtract_initial_heights, OptimizeConfig};
use crate::report::{predictor_report, PredictorOptions};
use crate::ricci::curvature_graph;
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Measurement files. The pipeline reads the first; stability reports
    /// treat each as one snapshot.
    pub inputs: Vec<PathBuf>,
    pub residual_mode: ResidualMode,
    /// Threshold sweep, strictly ascending.
    pub epsilons_ms: Vec<f64>,
    /// Single-linkage cutoff; 0 disables clustering.
    pub cluster_cutoff_km: f64,
    pub mesh_k: usize,
    pub projection: ProjectionKind,
    pub margin_fraction: f64,
    pub lambdas: Vec<f64>,
    /// Edge-ball radius; defaults to the longest flat-mesh edge.
    pub ball_radius: Option<f64>,
    pub apex_fraction: f64,
    pub variant: CurvatureLossVariant,
    pub optimizer: OptimizeConfig,
    pub subtract_initial: bool,
    pub flatten_exterior: bool,
    /// Exterior ramp width; defaults to twice the ball radius.
    pub falloff_width: Option<f64>,
    pub reports: bool,
    pub subdivision: usize,
    pub with_intercept: bool,
    pub tiv_slack_ms: Option<f64>,
    pub output_dir: Option<PathBuf>,
    /// Only used by synthetic fixture generation.
    pub seed: u64,
    /// Copied verbatim into artifact metadata.
    pub created: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            residual_mode: ResidualMode::default(),
            epsilons_ms: vec![10.0, 16.0, 18.0, 22.0],
            cluster_cutoff_km: 500.0,
            mesh_k: 50,
            projection: ProjectionKind::default(),
            margin_fraction: DEFAULT_MARGIN,
            lambdas: vec![DEFAULT_LAMBDA_SMOOTH],
            ball_radius: None,
            apex_fraction: 0.1,
            variant: CurvatureLossVariant::default(),
            optimizer: OptimizeConfig::default(),
            subtract_initial: true,
            flatten_exterior: true,
            falloff_width: None,
            reports: true,
            subdivision: DEFAULT_SUBDIVISION,
            with_intercept: false,
            tiv_slack_ms: None,
            output_dir: None,
            seed: 0,
            created: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.epsilons_ms.is_empty() || self.lambdas.is_empty() {
            return bad("epsilon and lambda lists must be nonempty".into());
        }
        if self.epsilons_ms.iter().any(|e| !(e.is_finite() && *e >= 0.0)) || self.epsilons_ms.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("epsilons must be finite, non-negative and strictly ascending: {:?}", self.epsilons_ms));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad(format!("lambdas must be finite and non-negative: {:?}", self.lambdas));
        }
        if self.mesh_k < 2 {
            return Err(Error::GridTooSmall(self.mesh_k));
        }
        if !(self.cluster_cutoff_km >= 0.0) {
            return bad(format!("cluster cutoff {}", self.cluster_cutoff_km));
        }
        if let Some(w) = self.falloff_width {
            if !(w > 0.0) {
                return bad(format!("falloff width {w}"));
            }
        }
        self.optimizer.validate()
    }

    /// Sweep points in output order: epsilon-major, then lambda.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        self.epsilons_ms
            .iter()
            .flat_map(|&e| self.lambdas.iter().map(move |&l| (e, l)))
            .collect()
    }
}

pub fn artifact_id(epsilon_ms: f64, lambda_smooth: f64) -> String {
    format!("eps-{epsilon_ms}-lambda-{lambda_smooth}")
}

/// Loads `config.inputs[0]` and runs the sweep.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Vec<ManifoldArtifact>> {
    let path = config
        .inputs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no input file given".into()).at_stage("ingest"))?;
    let matrix = load_path(path).map_err(|e| e.at_stage("ingest"))?;
    run_on_matrix(&matrix, config)
}

/// Shared per-run state: everything that does not depend on the sweep point.
struct Prepared {
    matrix: LatencyMatrix,
    projection: Projection,
    positions: Vec<[f64; 2]>,
    mesh: HalfEdgeMesh,
    initial: Vec<f64>,
    ball_radius: f64,
}

fn prepare(matrix: &LatencyMatrix, config: &PipelineConfig) -> Result<Prepared> {
    config.validate().map_err(|e| e.at_stage("config"))?;
    if matrix.pair_count() == 0 {
        return Err(Error::InvalidParameter("input contains no measurements".into()).at_stage("ingest"));
    }
    let matrix = if config.cluster_cutoff_km > 0.0 {
        cluster_vantage_points(matrix, config.cluster_cutoff_km).map_err(|e| e.at_stage("cluster"))?
    } else {
        matrix.clone()
    };
    let locations: Vec<_> = matrix.points().iter().map(|p| p.location).collect();
    let projection = Projection::fit(config.projection, &locations, config.margin_fraction).map_err(|e| e.at_stage("projection"))?;
    let positions = locations
        .iter()
        .map(|&p| projection.project(p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("projection"))?;
    let mesh = build_grid_mesh(config.mesh_k, projection.domain()).map_err(|e| e.at_stage("mesh"))?;
    let initial = init_sphere_cap(&mesh, config.apex_fraction).map_err(|e| e.at_stage("mesh"))?;
    let ball_radius = config.ball_radius.unwrap_or_else(|| mesh.longest_flat_edge());
    Ok(Prepared { matrix, projection, positions, mesh, initial, ball_radius })
}

/// Runs every sweep point of `config` on an in-memory measurement matrix.
pub fn run_on_matrix(matrix: &LatencyMatrix, config: &PipelineConfig) -> Result<Vec<ManifoldArtifact>> {
    let prep = prepare(matrix, config)?;
    let graphs = config
        .epsilons_ms
        .iter()
        .map(|&eps| {
            threshold_graph(&prep.matrix, eps, config.residual_mode)
                .map(|g| curvature_graph(&g))
                .map_err(|e| e.at_stage("threshold"))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = config.sweep_points();
    let lambdas = config.lambdas.len();
    par::map_indices(points.len(), |i| {
        let (eps, lambda) = points[i];
        sweep_point(&prep, &graphs[i / lambdas], eps, lambda, config)
    })
    .into_iter()
    .collect()
}

fn sweep_point(prep: &Prepared, graph: &DelayGraph, eps: f64, lambda: f64, config: &PipelineConfig) -> Result<ManifoldArtifact> {
    let params = LossParams {
        epsilon_ms: eps,
        lambda_smooth: lambda,
        ball_radius: prep.ball_radius,
        variant: config.variant,
    };
    let problem = LossProblem::new(&prep.mesh, graph, &prep.positions, params).map_err(|e| e.at_stage("loss"))?;
    let result = optimize_heights(&problem, &prep.initial, &config.optimizer).map_err(|e| e.at_stage("optimize"))?;
    let (curvature_loss, smoothness_loss, total_loss) = problem.value(&result.heights).map_err(|e| e.at_stage("optimize"))?;

    let falloff_width = config.falloff_width.unwrap_or(2.0 * prep.ball_radius);
    let post = |h: Vec<f64>| -> Result<Vec<f64>> {
        let h = if config.subtract_initial { subtract_initial_heights(&h, &prep.initial)? } else { h };
        if config.flatten_exterior && graph.vertex_count() > 0 {
            flatten_exterior(&prep.mesh, graph, &prep.positions, &h, falloff_width)
        } else {
            Ok(h)
        }
    };
    let vertex_z = post(result.heights.clone()).map_err(|e| e.at_stage("postprocess"))?;

    let reports = if config.reports {
        let options = PredictorOptions {
            subdivision: config.subdivision,
            with_intercept: config.with_intercept,
            tiv_slack_ms: config.tiv_slack_ms,
            epsilon_grid: config.epsilons_ms.clone(),
            residual_mode: config.residual_mode,
        };
        let report = predictor_report(&prep.matrix, &prep.mesh, &vertex_z, &prep.projection, &options).map_err(|e| e.at_stage("report"))?;
        Some(ArtifactReports { predictor: Some(report) })
    } else {
        None
    };

    let vertices = graph
        .vertices
        .iter()
        .zip(&prep.positions)
        .map(|(v, &xy)| ArtifactVertex {
            id: v.id.clone(),
            name: v.name.clone(),
            lat: v.location.lat,
            lon: v.location.lon,
            xy,
        })
        .collect();
    let edges = graph
        .edges
        .iter()
        .map(|e| ArtifactEdge {
            u: e.u,
            v: e.v,
            residual_ms: e.residual_ms,
            ricci: e.ricci.expect("curvature_graph annotates every edge"),
            epsilon_first_appearance: epsilon_first_appearance(e.residual_ms, &config.epsilons_ms).unwrap_or(eps),
        })
        .collect();

    Ok(ManifoldArtifact {
        schema_version: SCHEMA_VERSION,
        id: artifact_id(eps, lambda),
        metadata: ArtifactMetadata {
            config: config.clone(),
            epsilon_ms: eps,
            lambda_smooth: lambda,
            ball_radius: prep.ball_radius,
            variant: config.variant,
            residual_mode: config.residual_mode,
            optimizer: config.optimizer,
            termination: result.termination,
            iterations: result.iterations,
            loss_history: result.loss_history,
            curvature_loss,
            smoothness_loss,
            total_loss,
            subtract_initial: config.subtract_initial,
            flatten_exterior: config.flatten_exterior,
            falloff_width,
            created: config.created.clone(),
        },
        projection: prep.projection.clone(),
        mesh: MeshData {
            k: prep.mesh.k(),
            bounds: prep.mesh.bounds(),
            vertex_xy: prep.mesh.xy().to_vec(),
            vertex_z,
            optimized_z: result.heights,
            faces: prep.mesh.faces().to_vec(),
        },
        graph: GraphData {
            epsilon_ms: graph.epsilon_ms,
            residual_mode: graph.residual_mode,
            clamped_residuals: graph.clamped_residuals,
            vertices,
            edges,
        },
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy_network, TOY_EPSILON_MS};

    fn quick_config() -> PipelineConfig {
        PipelineConfig {
            epsilons_ms: vec![TOY_EPSILON_MS],
            cluster_cutoff_km: 0.0,
            mesh_k: 12,
            projection: ProjectionKind::Equirectangular,
            optimizer: OptimizeConfig { max_iterations: 20, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        for cfg in [
            PipelineConfig { epsilons_ms: vec![], ..Default::default() },
            PipelineConfig { epsilons_ms: vec![10.0, 10.0], ..Default::default() },
            PipelineConfig { epsilons_ms: vec![16.0, 10.0], ..Default::default() },
            PipelineConfig { lambdas: vec![-1.0], ..Default::default() },
            PipelineConfig { mesh_k: 1, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let cfg = PipelineConfig { epsilons_ms: vec![10.0, 16.0], lambdas: vec![0.1, 0.2], ..Default::default() };
        assert_eq!(cfg.sweep_points(), vec![(10.0, 0.1), (10.0, 0.2), (16.0, 0.1), (16.0, 0.2)]);
        assert_eq!(artifact_id(10.0, 0.001), "eps-10-lambda-0.001");
    }

    #[test]
    fn errors_name_their_stage() {
        let empty = LatencyMatrix::new(Vec::new()).unwrap();
        match run_on_matrix(&empty, &quick_config()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "ingest"),
            other => panic!("{other:?}"),
        }
        match run_pipeline(&quick_config()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "ingest"),
            other => panic!("{other:?}"),
        }
        let bad = PipelineConfig { mesh_k: 1, ..quick_config() };
        assert!(matches!(run_on_matrix(&toy_network(), &bad), Err(Error::Stage { stage: "config", .. })));
    }

    #[test]
    fn toy_sweep_artifacts() {
        let cfg = PipelineConfig { epsilons_ms: vec![0.5, TOY_EPSILON_MS, 60.0], ..quick_config() };
        let arts = run_on_matrix(&toy_network(), &cfg).unwrap();
        assert_eq!(arts.len(), 3);
        assert_eq!(arts[0].graph.edges.len(), 0);
        assert_eq!(arts[1].graph.edges.len(), 33);
        assert_eq!(arts[2].graph.edges.len(), 105);
        for a in &arts {
            a.validate().unwrap();
            let r = a.reports.as_ref().unwrap().predictor.as_ref().unwrap();
            assert_eq!(r.rows.len(), 105);
            assert!(a.mesh.vertex_z.iter().all(|&z| z >= 0.0));
        }
        for e in &arts[2].graph.edges {
            let expected = if e.residual_ms <= TOY_EPSILON_MS { TOY_EPSILON_MS } else { 60.0 };
            assert_eq!(e.epsilon_first_appearance, expected);
        }
    }
}
