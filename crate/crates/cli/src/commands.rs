//! File-level subcommands: build, optimize, report and export.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use delayspace::artifact::{export_manifold, import_manifold, ManifoldArtifact};
use delayspace::netgraph::{cluster_vantage_points, load_path, threshold_graph, DelayGraph};
use delayspace::pipeline::{run_pipeline, PipelineConfig};
use delayspace::report::stability_report;
use delayspace::ricci::curvature_graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

fn output_dir(config: &PipelineConfig) -> anyhow::Result<PathBuf> {
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn first_input(config: &PipelineConfig) -> anyhow::Result<&Path> {
    match config.inputs.first() {
        Some(p) => Ok(p),
        None => bail!("no input measurement file (use --input)"),
    }
}

/// Thresholds and annotates the graph at every sweep epsilon, writing
/// `graph-eps-<eps>.json` per threshold.
pub fn build(config: &PipelineConfig) -> anyhow::Result<Vec<(PathBuf, DelayGraph)>> {
    let input = first_input(config)?;
    let mut matrix = load_path(input).with_context(|| format!("reading {}", input.display()))?;
    if config.cluster_cutoff_km > 0.0 {
        matrix = cluster_vantage_points(&matrix, config.cluster_cutoff_km)?;
    }
    let dir = output_dir(config)?;
    let mut out = Vec::new();
    for &eps in &config.epsilons_ms {
        let graph = curvature_graph(&threshold_graph(&matrix, eps, config.residual_mode)?);
        let path = dir.join(format!("graph-eps-{eps}.json"));
        std::fs::write(&path, serde_json::to_vec_pretty(&graph)?)?;
        out.push((path, graph));
    }
    Ok(out)
}

pub fn graph_summary(graph: &DelayGraph) -> String {
    let negative = graph.edges.iter().filter(|e| e.ricci.is_some_and(|k| k < 0.0)).count();
    format!(
        "eps {} ms: {} vertices, {} edges ({negative} negatively curved), {} clamped residuals",
        graph.epsilon_ms,
        graph.vertex_count(),
        graph.edges.len(),
        graph.clamped_residuals
    )
}

/// Runs the full pipeline and exports one artifact per sweep point.
pub fn optimize(config: &PipelineConfig) -> anyhow::Result<Vec<(PathBuf, ManifoldArtifact)>> {
    let artifacts = run_pipeline(config)?;
    let dir = output_dir(config)?;
    artifacts
        .into_iter()
        .map(|a| {
            let path = dir.join(format!("{}.json", a.id));
            export_manifold(&a, &path)?;
            Ok((path, a))
        })
        .collect()
}

pub fn artifact_summary(a: &ManifoldArtifact) -> String {
    let m = &a.metadata;
    format!(
        "{}: {} edges, {} iterations ({:?}), loss {:.6e} (curvature {:.6e}, smoothness {:.6e})",
        a.id,
        a.graph.edges.len(),
        m.iterations,
        m.termination,
        m.total_loss,
        m.curvature_loss,
        m.smoothness_loss
    )
}

/// Predictor report stored in an artifact.
pub fn predictor(artifact: &Path, format: Format) -> anyhow::Result<String> {
    let a = import_manifold(artifact).with_context(|| format!("reading {}", artifact.display()))?;
    let Some(report) = a.reports.as_ref().and_then(|r| r.predictor.as_ref()) else {
        bail!("{} carries no predictor report", artifact.display());
    };
    Ok(match format {
        Format::Text => report.to_text(),
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
    })
}

/// Stability of fitted latencies across the input snapshots.
pub fn stability(config: &PipelineConfig, format: Format) -> anyhow::Result<String> {
    let snapshots = config
        .inputs
        .iter()
        .map(|p| load_path(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = stability_report(&snapshots, config)?;
    Ok(match format {
        Format::Text => report.to_text(),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    })
}

/// Re-validates artifacts and writes canonical copies into `dir`.
pub fn export(artifacts: &[PathBuf], dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    artifacts
        .iter()
        .map(|src| {
            let a = import_manifold(src).with_context(|| format!("reading {}", src.display()))?;
            let path = dir.join(format!("{}.json", a.id));
            export_manifold(&a, &path)?;
            Ok(path)
        })
        .collect()
}
