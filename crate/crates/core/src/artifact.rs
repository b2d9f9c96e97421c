//! The exported manifold bundle and its canonical JSON encoding.
//!
//! Export writes compact JSON with struct fields in declaration order and
//! every float as `{:.16e}` (17 significant digits), so equal artifacts give
//! equal bytes and import restores every float exactly.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::Projection;
use crate::loss::CurvatureLossVariant;
use crate::mesh::{build_grid_mesh, HalfEdgeMesh};
use crate::netgraph::{DelayGraph, GraphEdge, ResidualMode, VantagePoint};
use crate::optimize::{OptimizeConfig, Termination};
use crate::pipeline::PipelineConfig;
use crate::report::PredictorReport;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldArtifact {
    pub schema_version: u32,
    /// Stable name of the sweep point, e.g. `eps-10-lambda-0.001`.
    pub id: String,
    pub metadata: ArtifactMetadata,
    pub projection: Projection,
    pub mesh: MeshData,
    pub graph: GraphData,
    pub reports: Option<ArtifactReports>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactMetadata {
    pub config: PipelineConfig,
    pub epsilon_ms: f64,
    pub lambda_smooth: f64,
    pub ball_radius: f64,
    pub variant: CurvatureLossVariant,
    pub residual_mode: ResidualMode,
    pub optimizer: OptimizeConfig,
    pub termination: Termination,
    pub iterations: usize,
    pub loss_history: Vec<f64>,
    pub curvature_loss: f64,
    pub smoothness_loss: f64,
    pub total_loss: f64,
    pub subtract_initial: bool,
    pub flatten_exterior: bool,
    pub falloff_width: f64,
    /// Caller-supplied; the pipeline never reads the clock.
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshData {
    pub k: usize,
    pub bounds: [f64; 4],
    pub vertex_xy: Vec<[f64; 2]>,
    /// Displayed heights, after post-processing.
    pub vertex_z: Vec<f64>,
    /// Heights as returned by the optimizer.
    pub optimized_z: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactVertex {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEdge {
    pub u: usize,
    pub v: usize,
    pub residual_ms: f64,
    pub ricci: f64,
    pub epsilon_first_appearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphData {
    pub epsilon_ms: f64,
    pub residual_mode: ResidualMode,
    pub clamped_residuals: usize,
    pub vertices: Vec<ArtifactVertex>,
    pub edges: Vec<ArtifactEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactReports {
    pub predictor: Option<PredictorReport>,
}

impl ManifoldArtifact {
    /// Checks every structural invariant an importer relies on.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation("/schema_version", format!("unsupported version {}", self.schema_version)));
        }
        let m = &self.mesh;
        let grid = build_grid_mesh(m.k, m.bounds).map_err(|e| Error::validation("/mesh/k", e.to_string()))?;
        let n = grid.vertex_count();
        for (name, len) in [("vertex_xy", m.vertex_xy.len()), ("vertex_z", m.vertex_z.len()), ("optimized_z", m.optimized_z.len())] {
            if len != n {
                return Err(Error::validation(format!("/mesh/{name}"), format!("expected {n} entries, found {len}")));
            }
        }
        if m.faces.len() != grid.faces().len() {
            return Err(Error::validation("/mesh/faces", format!("expected {} faces, found {}", grid.faces().len(), m.faces.len())));
        }
        for (f, face) in m.faces.iter().enumerate() {
            if let Some(c) = face.iter().position(|&v| v >= n) {
                return Err(Error::validation(format!("/mesh/faces/{f}/{c}"), format!("vertex index {} out of range", face[c])));
            }
            if *face != grid.faces()[f] {
                return Err(Error::validation(format!("/mesh/faces/{f}"), "face does not match the grid layout"));
            }
        }
        for (i, (p, q)) in m.vertex_xy.iter().zip(grid.xy()).enumerate() {
            if p != q {
                return Err(Error::validation(format!("/mesh/vertex_xy/{i}"), "vertex does not lie on the grid"));
            }
        }
        for (name, zs) in [("vertex_z", &m.vertex_z), ("optimized_z", &m.optimized_z)] {
            if let Some(i) = zs.iter().position(|z| !z.is_finite()) {
                return Err(Error::validation(format!("/mesh/{name}/{i}"), "height is not finite"));
            }
        }
        let g = &self.graph;
        for (i, v) in g.vertices.iter().enumerate() {
            if !grid.contains(v.xy) {
                return Err(Error::validation(format!("/graph/vertices/{i}/xy"), "vertex lies outside the mesh bounds"));
            }
        }
        for (i, e) in g.edges.iter().enumerate() {
            let ptr = |f: &str| format!("/graph/edges/{i}/{f}");
            if e.u >= e.v || e.v >= g.vertices.len() {
                return Err(Error::validation(ptr("v"), format!("invalid endpoints ({}, {})", e.u, e.v)));
            }
            if !(-2.0..=1.0).contains(&e.ricci) {
                return Err(Error::validation(ptr("ricci"), format!("curvature {} outside [-2, 1]", e.ricci)));
            }
            if !(e.residual_ms <= g.epsilon_ms) {
                return Err(Error::validation(ptr("residual_ms"), "residual exceeds the threshold"));
            }
            if !(e.epsilon_first_appearance <= g.epsilon_ms) {
                return Err(Error::validation(ptr("epsilon_first_appearance"), "appears after this threshold"));
            }
        }
        Ok(())
    }

    pub fn half_edge_mesh(&self) -> Result<HalfEdgeMesh> {
        build_grid_mesh(self.mesh.k, self.mesh.bounds)
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.graph.vertices.iter().position(|v| v.id == id)
    }

    /// Rebuilds the curvature-annotated graph.
    pub fn delay_graph(&self) -> Result<DelayGraph> {
        let vertices = self
            .graph
            .vertices
            .iter()
            .map(|v| {
                Ok(VantagePoint {
                    id: v.id.clone(),
                    name: v.name.clone(),
                    location: crate::geo::GeoPoint::new(v.lat, v.lon)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DelayGraph {
            vertices,
            edges: self
                .graph
                .edges
                .iter()
                .map(|e| GraphEdge { u: e.u, v: e.v, residual_ms: e.residual_ms, ricci: Some(e.ricci) })
                .collect(),
            epsilon_ms: self.graph.epsilon_ms,
            residual_mode: self.graph.residual_mode,
            clamped_residuals: self.graph.clamped_residuals,
        })
    }

    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
        self.serialize(&mut ser).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    /// Parses and validates; schema errors carry the JSON pointer of the
    /// offending value.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        let artifact: ManifoldArtifact = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let pointer = json_pointer(e.path());
            Error::validation(pointer, e.into_inner().to_string())
        })?;
        de.end().map_err(|e| Error::validation("", e.to_string()))?;
        artifact.validate()?;
        Ok(artifact)
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

pub fn export_manifold(artifact: &ManifoldArtifact, path: &Path) -> Result<()> {
    artifact.validate()?;
    std::fs::write(path, artifact.to_canonical_json()?)?;
    Ok(())
}

pub fn import_manifold(path: &Path) -> Result<ManifoldArtifact> {
    ManifoldArtifact::from_json_slice(&std::fs::read(path)?)
}

/// Compact JSON with floats in fixed 17-significant-digit scientific form.
struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
}
