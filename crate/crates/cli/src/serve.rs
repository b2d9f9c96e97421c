//! Read-only HTTP service over a directory of manifold artifacts.
//!
//! * `GET /manifolds`: artifact list sorted by epsilon, then lambda.
//! * `GET /manifold/{id}`: the artifact's canonical JSON.
//! * `GET /manifold/{id}/geodesic?src=&dst=&s=`: surface geodesic between
//!   two graph vertices with the fitted latency.
//!
//! Anything else falls through to the static viewer bundle when one is
//! configured.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use delayspace::artifact::{import_manifold, ManifoldArtifact};
use delayspace::geodesic::{surface_geodesic, GeodesicResult, DEFAULT_SUBDIVISION};
use delayspace::mesh::HalfEdgeMesh;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

/// Largest Steiner subdivision a query may ask for.
pub const MAX_SUBDIVISION: usize = 64;

struct Entry {
    artifact: ManifoldArtifact,
    mesh: HalfEdgeMesh,
    json: Vec<u8>,
}

pub struct Store {
    entries: BTreeMap<String, Arc<Entry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSummary {
    pub id: String,
    pub epsilon_ms: f64,
    pub lambda_smooth: f64,
    pub vertices: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResponse {
    pub manifold: String,
    pub src: String,
    pub dst: String,
    #[serde(flatten)]
    pub geodesic: GeodesicResult,
    /// Geodesic length mapped through the artifact's fitted predictor.
    pub fitted_latency_ms: Option<f64>,
    pub observed_rtt_ms: Option<f64>,
    pub delta_gcd_ms: Option<f64>,
    /// `fitted_latency_ms - observed_rtt_ms`.
    pub delta_geo_ms: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct GeodesicQuery {
    pub src: String,
    pub dst: String,
    pub s: Option<usize>,
}

impl Store {
    pub fn new(artifacts: Vec<ManifoldArtifact>) -> anyhow::Result<Self> {
        let mut entries = BTreeMap::new();
        for artifact in artifacts {
            let mesh = artifact.half_edge_mesh()?;
            let json = artifact.to_canonical_json()?;
            let id = artifact.id.clone();
            if entries.insert(id.clone(), Arc::new(Entry { artifact, mesh, json })).is_some() {
                bail!("duplicate artifact id `{id}`");
            }
        }
        Ok(Store { entries })
    }

    /// Loads every `*.json` file in `dir` that parses as an artifact; other
    /// JSON files are skipped with a warning.
    pub fn load_dir(dir: &Path) -> anyhow::Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut artifacts = Vec::new();
        for p in paths {
            match import_manifold(&p) {
                Ok(a) => artifacts.push(a),
                Err(e) => log::warn!("skipping {}: {e}", p.display()),
            }
        }
        if artifacts.is_empty() {
            bail!("no manifold artifacts in {}", dir.display());
        }
        Self::new(artifacts)
    }

    pub fn summaries(&self) -> Vec<ManifoldSummary> {
        let mut out: Vec<ManifoldSummary> = self
            .entries
            .values()
            .map(|e| ManifoldSummary {
                id: e.artifact.id.clone(),
                epsilon_ms: e.artifact.metadata.epsilon_ms,
                lambda_smooth: e.artifact.metadata.lambda_smooth,
                vertices: e.artifact.graph.vertices.len(),
                edges: e.artifact.graph.edges.len(),
            })
            .collect();
        out.sort_by(|a, b| {
            a.epsilon_ms
                .total_cmp(&b.epsilon_ms)
                .then(a.lambda_smooth.total_cmp(&b.lambda_smooth))
                .then_with(|| a.id.cmp(&b.id))
        });
        out
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: String) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, what)
}

fn bad_request(what: String) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, what)
}

type Shared = Arc<Store>;

fn entry(store: &Store, id: &str) -> Result<Arc<Entry>, ApiError> {
    store.entries.get(id).cloned().ok_or_else(|| not_found(format!("unknown manifold `{id}`")))
}

async fn list(State(store): State<Shared>) -> Json<Vec<ManifoldSummary>> {
    Json(store.summaries())
}

async fn manifold(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let e = entry(&store, &id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], e.json.clone()).into_response())
}

async fn geodesic(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<GeodesicQuery>, QueryRejection>,
) -> Result<Json<GeodesicResponse>, ApiError> {
    let e = entry(&store, &id)?;
    let Query(q) = query.map_err(|r| bad_request(r.body_text()))?;
    let s = q.s.unwrap_or(DEFAULT_SUBDIVISION);
    if s > MAX_SUBDIVISION {
        return Err(bad_request(format!("s = {s} exceeds {MAX_SUBDIVISION}")));
    }
    let vertex = |v: &str| {
        e.artifact
            .vertex_index(v)
            .map(|i| e.artifact.graph.vertices[i].xy)
            .ok_or_else(|| not_found(format!("unknown vertex `{v}` in `{id}`")))
    };
    let (a, b) = (vertex(&q.src)?, vertex(&q.dst)?);
    let worker = e.clone();
    let geodesic = tokio::task::spawn_blocking(move || surface_geodesic(&worker.mesh, &worker.artifact.mesh.vertex_z, a, b, s))
        .await
        .map_err(|err| ApiError(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()))?
        .map_err(|err| ApiError(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()))?;

    let predictor = e.artifact.reports.as_ref().and_then(|r| r.predictor.as_ref());
    let fitted_latency_ms = predictor.map(|p| p.geo_fit.predict(geodesic.length));
    let row = predictor.and_then(|p| p.row(&q.src, &q.dst));
    let observed_rtt_ms = row.map(|r| r.rtt_ms);
    Ok(Json(GeodesicResponse {
        manifold: id,
        src: q.src,
        dst: q.dst,
        geodesic,
        fitted_latency_ms,
        observed_rtt_ms,
        delta_gcd_ms: row.map(|r| r.delta_gcd_ms),
        delta_geo_ms: fitted_latency_ms.zip(observed_rtt_ms).map(|(f, o)| f - o),
    }))
}

pub fn router(store: Store, static_dir: Option<&Path>) -> Router {
    let app = Router::new()
        .route("/manifolds", get(list))
        .route("/manifold/{id}", get(manifold))
        .route("/manifold/{id}/geodesic", get(geodesic))
        .with_state(Arc::new(store));
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(dir: &Path, addr: SocketAddr, static_dir: Option<&Path>) -> anyhow::Result<()> {
    let store = Store::load_dir(dir)?;
    log::info!("serving {} manifolds from {} on http://{addr}", store.entries.len(), dir.display());
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    axum::serve(listener, router(store, static_dir)).await?;
    Ok(())
}
