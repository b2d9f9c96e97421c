use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use delayspace_cli::commands::{self, Format};
use delayspace_cli::config::PipelineArgs;
use delayspace_cli::fetch::{fetch_measurements, AtlasClient, FetchConfig, DEFAULT_BASE_URL};
use delayspace_cli::serve;

#[derive(Parser)]
#[command(name = "delayspace", version, about = "Curvature-annotated latency manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pull ping results from RIPE Atlas into a measurement file.
    Fetch {
        /// Fetch config: vantage points with probe ids and measurement ids.
        #[arg(long)]
        source: PathBuf,
        #[arg(long, short = 'o')]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
        #[arg(long, default_value_t = 5)]
        max_retries: u32,
    },
    /// Threshold the measurements and annotate edges with Ricci curvature.
    Build(PipelineArgs),
    /// Optimize one manifold per sweep point and export the artifacts.
    Optimize(PipelineArgs),
    /// Print the predictor report of an artifact, or a stability report
    /// across several measurement snapshots.
    Report {
        #[arg(long)]
        artifact: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Validate artifacts and write canonical copies.
    Export {
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[arg(long, short = 'o')]
        out_dir: PathBuf,
    },
    /// Serve a directory of artifacts over HTTP.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Built viewer bundle to host at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Fetch { source, out, base_url, max_retries } => {
            let config: FetchConfig = serde_json::from_slice(&std::fs::read(&source)?)?;
            let mut client = AtlasClient::from_env(base_url);
            client.max_retries = max_retries;
            let reduction = fetch_measurements(&client, &config).await?;
            reduction.matrix.write_json(std::fs::File::create(&out)?)?;
            println!(
                "{}: {} pairs over {} vantage points ({} omitted)",
                out.display(),
                reduction.matrix.pair_count(),
                reduction.matrix.len(),
                reduction.omitted.len()
            );
        }
        Command::Build(args) => {
            for (path, graph) in commands::build(&args.resolve()?)? {
                println!("{} -> {}", commands::graph_summary(&graph), path.display());
            }
        }
        Command::Optimize(args) => {
            let config = args.resolve()?;
            let written = tokio::task::spawn_blocking(move || commands::optimize(&config)).await??;
            for (path, a) in written {
                println!("{} -> {}", commands::artifact_summary(&a), path.display());
            }
        }
        Command::Report { artifact, format, pipeline } => {
            let text = match artifact {
                Some(path) => commands::predictor(&path, format)?,
                None => commands::stability(&pipeline.resolve()?, format)?,
            };
            print!("{text}");
        }
        Command::Export { artifacts, out_dir } => {
            for path in commands::export(&artifacts, &out_dir)? {
                println!("{}", path.display());
            }
        }
        Command::Serve { dir, addr, static_dir } => serve::serve(&dir, addr, static_dir.as_deref()).await?,
    }
    Ok(())
}
