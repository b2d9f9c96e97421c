//! Command-line flags for [`PipelineConfig`].
//!
//! Every flag overrides the value from `--config` (a JSON `PipelineConfig`),
//! which in turn overrides the defaults.

use std::path::PathBuf;

use clap::Args;
use delayspace::geo::ProjectionKind;
use delayspace::loss::CurvatureLossVariant;
use delayspace::netgraph::ResidualMode;
use delayspace::pipeline::PipelineConfig;

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON pipeline config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Measurement file (JSON); repeat for stability snapshots.
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub residual_mode: Option<ResidualMode>,
    /// Threshold sweep in ms, comma separated and ascending.
    #[arg(long, value_delimiter = ',')]
    pub epsilons_ms: Option<Vec<f64>>,
    #[arg(long)]
    pub cluster_cutoff_km: Option<f64>,
    #[arg(long)]
    pub mesh_k: Option<usize>,
    #[arg(long)]
    pub projection: Option<ProjectionKind>,
    #[arg(long)]
    pub margin_fraction: Option<f64>,
    /// Smoothness weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub ball_radius: Option<f64>,
    #[arg(long)]
    pub apex_fraction: Option<f64>,
    #[arg(long)]
    pub variant: Option<CurvatureLossVariant>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gradient_tolerance: Option<f64>,
    #[arg(long)]
    pub relative_loss_tolerance: Option<f64>,
    #[arg(long)]
    pub lbfgs_memory: Option<usize>,
    #[arg(long)]
    pub no_subtract_initial: bool,
    #[arg(long)]
    pub no_flatten_exterior: bool,
    #[arg(long)]
    pub falloff_width: Option<f64>,
    #[arg(long)]
    pub no_reports: bool,
    /// Steiner points per mesh edge for geodesics.
    #[arg(long)]
    pub subdivision: Option<usize>,
    #[arg(long)]
    pub with_intercept: bool,
    /// Drop triangle-inequality violations with this slack before fitting.
    #[arg(long)]
    pub tiv_slack_ms: Option<f64>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Free-form creation stamp copied into artifact metadata.
    #[arg(long)]
    pub created: Option<String>,
}

impl PipelineArgs {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(residual_mode, epsilons_ms, cluster_cutoff_km, mesh_k, projection, margin_fraction, lambdas, apex_fraction, variant, subdivision, seed);
        if self.ball_radius.is_some() {
            c.ball_radius = self.ball_radius;
        }
        if self.falloff_width.is_some() {
            c.falloff_width = self.falloff_width;
        }
        if self.tiv_slack_ms.is_some() {
            c.tiv_slack_ms = self.tiv_slack_ms;
        }
        if self.output_dir.is_some() {
            c.output_dir = self.output_dir.clone();
        }
        if self.created.is_some() {
            c.created = self.created.clone();
        }
        if let Some(v) = self.max_iterations {
            c.optimizer.max_iterations = v;
        }
        if let Some(v) = self.gradient_tolerance {
            c.optimizer.gradient_tolerance = v;
        }
        if let Some(v) = self.relative_loss_tolerance {
            c.optimizer.relative_loss_tolerance = v;
        }
        if let Some(v) = self.lbfgs_memory {
            c.optimizer.lbfgs_memory = v;
        }
        c.subtract_initial &= !self.no_subtract_initial;
        c.flatten_exterior &= !self.no_flatten_exterior;
        c.reports &= !self.no_reports;
        c.with_intercept |= self.with_intercept;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrapper {
        #[command(flatten)]
        args: PipelineArgs,
    }

    fn parse(argv: &[&str]) -> PipelineConfig {
        Wrapper::parse_from(std::iter::once("x").chain(argv.iter().copied())).args.resolve().unwrap()
    }

    #[test]
    fn defaults_without_flags() {
        assert_eq!(parse(&[]), PipelineConfig::default());
    }

    #[test]
    fn flags_override_fields() {
        let c = parse(&[
            "--input", "m.json", "--epsilons-ms", "5,12.5", "--mesh-k", "20", "--projection", "equirectangular",
            "--residual-mode", "half-rtt-minus-gcl", "--variant", "uniform", "--lambdas", "0.01",
            "--max-iterations", "7", "--no-flatten-exterior", "--tiv-slack-ms", "1.5", "--created", "today",
        ]);
        assert_eq!(c.inputs, vec![PathBuf::from("m.json")]);
        assert_eq!(c.epsilons_ms, vec![5.0, 12.5]);
        assert_eq!(c.mesh_k, 20);
        assert_eq!(c.projection, ProjectionKind::Equirectangular);
        assert_eq!(c.residual_mode, ResidualMode::HalfRttMinusGcl);
        assert_eq!(c.variant, CurvatureLossVariant::Uniform);
        assert_eq!(c.lambdas, vec![0.01]);
        assert_eq!(c.optimizer.max_iterations, 7);
        assert!(!c.flatten_exterior && c.subtract_initial);
        assert_eq!(c.tiv_slack_ms, Some(1.5));
        assert_eq!(c.created.as_deref(), Some("today"));
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"mesh_k": 12, "epsilons_ms": [3.0]}"#).unwrap();
        let c = parse(&["--config", path.to_str().unwrap(), "--epsilons-ms", "4,8"]);
        assert_eq!(c.mesh_k, 12);
        assert_eq!(c.epsilons_ms, vec![4.0, 8.0]);
    }

    #[test]
    fn invalid_sweep_is_rejected() {
        let w = Wrapper::parse_from(["x", "--epsilons-ms", "8,4"]);
        assert!(w.args.resolve().is_err());
    }
}
