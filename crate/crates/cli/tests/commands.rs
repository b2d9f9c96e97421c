use delayspace::artifact::import_manifold;
use delayspace::fixtures::{toy_network, us_sample, TOY_EPSILON_MS};
use delayspace::geo::ProjectionKind;
use delayspace::netgraph::DelayGraph;
use delayspace::optimize::OptimizeConfig;
use delayspace::pipeline::PipelineConfig;
use delayspace_cli::commands::{self, Format};

fn config(dir: &std::path::Path, input: std::path::PathBuf) -> PipelineConfig {
    PipelineConfig {
        inputs: vec![input],
        epsilons_ms: vec![TOY_EPSILON_MS, 20.0],
        cluster_cutoff_km: 0.0,
        mesh_k: 12,
        projection: ProjectionKind::Equirectangular,
        optimizer: OptimizeConfig { max_iterations: 20, ..Default::default() },
        output_dir: Some(dir.join("out")),
        ..Default::default()
    }
}

fn write_toy(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("toy.json");
    toy_network().write_json(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn build_writes_annotated_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), write_toy(dir.path()));
    let built = commands::build(&cfg).unwrap();
    assert_eq!(built.len(), 2);
    let (path, graph) = &built[0];
    let back: DelayGraph = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(&back, graph);
    assert_eq!(graph.edges.len(), 33);
    assert!(graph.edges.iter().all(|e| e.ricci.is_some()));
    assert!(commands::graph_summary(graph).contains("33 edges (3 negatively curved)"));
}

#[test]
fn optimize_report_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), write_toy(dir.path()));
    let written = commands::optimize(&cfg).unwrap();
    assert_eq!(written.len(), 2);
    for (path, a) in &written {
        assert_eq!(&import_manifold(path).unwrap(), a);
    }

    let text = commands::predictor(&written[0].0, Format::Text).unwrap();
    assert!(text.contains("delta_geo_ms"));
    let json: serde_json::Value = serde_json::from_str(&commands::predictor(&written[0].0, Format::Json).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), toy_network().pair_count());

    let copies = commands::export(&written.iter().map(|w| w.0.clone()).collect::<Vec<_>>(), &dir.path().join("copy")).unwrap();
    for (copy, (orig, _)) in copies.iter().zip(&written) {
        assert_eq!(std::fs::read(copy).unwrap(), std::fs::read(orig).unwrap());
    }

    let no_reports = PipelineConfig { reports: false, output_dir: Some(dir.path().join("bare")), ..cfg };
    let bare = commands::optimize(&no_reports).unwrap();
    assert!(commands::predictor(&bare[0].0, Format::Text).is_err());
}

#[test]
fn stability_over_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<_> = (0..3)
        .map(|seed| {
            let p = dir.path().join(format!("snap{seed}.json"));
            us_sample(seed).write_json(std::fs::File::create(&p).unwrap()).unwrap();
            p
        })
        .collect();
    let cfg = PipelineConfig { inputs, epsilons_ms: vec![16.0], ..config(dir.path(), Default::default()) };
    let text = commands::stability(&cfg, Format::Text).unwrap();
    assert!(text.lines().count() > 3, "{text}");
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { inputs: vec![], ..config(dir.path(), Default::default()) };
    assert!(commands::build(&cfg).unwrap_err().to_string().contains("--input"));
}
