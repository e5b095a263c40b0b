use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use dsprobe::catalog::load_dataset_registry;
use dsprobe::pipeline::{
    compare_index_files, Config, ConvertedArtifact, DetectionsArtifact, Pipeline, PipelineError, StageSummary,
    CONVERTED_ARTIFACT, DETECTIONS_ARTIFACT,
};
use dsprobe_annotate::{serve_blocking, AppState, DetectorOutput, Store};

#[derive(Parser)]
#[command(name = "dsprobe", version, about = "Track dataset citations and mentions across venue papers")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "dsprobe.toml")]
    config: PathBuf,
    /// Serve every request from this recorded cache; no network access.
    #[arg(long, global = true, value_name = "DIR")]
    replay: Option<PathBuf>,
    /// Worker threads per stage (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Report output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "URL")]
    grobid_url: Option<String>,
    /// Contact address sent to OpenAlex.
    #[arg(long, global = true, value_name = "EMAIL")]
    mailto: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List venue papers on DBLP and fetch their OpenAlex metadata.
    Harvest,
    /// Download or scrape PDFs and remove duplicates.
    FetchFulltext,
    /// Convert PDFs to TEI through GROBID.
    Convert,
    /// Detect dataset citations and mentions.
    Detect,
    /// Assign availability groups and aggregate presence.
    Analyze,
    /// Write the CSV reports and run manifest.
    Report,
    /// Compare two citing-work sets and print the containment pair.
    CompareIndex {
        #[arg(long, value_name = "FILE")]
        a: PathBuf,
        #[arg(long, value_name = "FILE")]
        b: PathBuf,
    },
    /// Run the annotation service.
    Serve {
        /// Directory holding projects and tokens.
        #[arg(long, default_value = "annotations")]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8090")]
        addr: SocketAddr,
    },
    /// Every pipeline stage in order.
    All,
}

/// Failure reported on stderr as one JSON object.
struct Failure {
    code: u8,
    kind: &'static str,
    stage: Option<&'static str>,
    message: String,
    artifact: Option<PathBuf>,
}

impl Failure {
    fn from_pipeline(stage: &'static str, e: PipelineError) -> Self {
        let code = match e {
            PipelineError::ConfigMissing(_) | PipelineError::Config { .. } => 2,
            _ => 1,
        };
        let artifact = match &e {
            PipelineError::StageInputMissing { artifact, .. } => Some(artifact.clone()),
            PipelineError::ConfigMissing(p) => Some(p.clone()),
            _ => None,
        };
        Failure { code, kind: e.kind(), stage: Some(stage), message: e.to_string(), artifact }
    }

    fn emit(&self) {
        let mut v = json!({ "error": self.kind, "message": self.message, "exit_code": self.code });
        if let Some(s) = self.stage {
            v["stage"] = json!(s);
        }
        if let Some(a) = &self.artifact {
            v["artifact"] = json!(a.display().to_string());
        }
        eprintln!("{v}");
    }
}

fn load_config(cli: &Cli) -> Result<Config, PipelineError> {
    let mut config = Config::load(&cli.config)?;
    if let Some(dir) = &cli.replay {
        config.cache_dir = std::path::absolute(dir).unwrap_or_else(|_| dir.clone());
        config.replay = true;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(PipelineError::Config {
                path: cli.config.clone(),
                message: "--workers must be at least 1".into(),
            });
        }
        config.workers = Some(w);
    }
    if let Some(url) = &cli.grobid_url {
        config.grobid_url = url.clone();
    }
    if let Some(m) = &cli.mailto {
        config.mailto = Some(m.clone());
    }
    Ok(config)
}

fn print_summary(s: &StageSummary) {
    println!("{}", serde_json::to_string(s).expect("summary serializes"));
}

type StageFn = fn(&Pipeline, Option<&Path>) -> Result<StageSummary, PipelineError>;

fn stage_name(c: &Command) -> &'static str {
    match c {
        Command::Harvest => "harvest",
        Command::FetchFulltext => "fetch-fulltext",
        Command::Convert => "convert",
        Command::Detect => "detect",
        Command::Analyze => "analyze",
        Command::Report => "report",
        Command::CompareIndex { .. } => "compare-index",
        Command::Serve { .. } => "serve",
        Command::All => "all",
    }
}

fn run_pipeline(cli: &Cli) -> Result<(), Failure> {
    let stage = stage_name(&cli.command);
    let pipeline = load_config(cli).and_then(Pipeline::new).map_err(|e| Failure::from_pipeline(stage, e))?;
    let out = cli.out.as_deref();
    let result = match &cli.command {
        Command::Harvest => pipeline.harvest().map(|s| vec![s]),
        Command::FetchFulltext => pipeline.fetch_fulltext().map(|s| vec![s]),
        Command::Convert => pipeline.convert().map(|s| vec![s]),
        Command::Detect => pipeline.detect().map(|s| vec![s]),
        Command::Analyze => pipeline.analyze().map(|s| vec![s]),
        Command::Report => pipeline.report(out).map(|s| vec![s]),
        Command::All => {
            // print each stage as it completes
            let stages: [(&'static str, StageFn); 6] = [
                ("harvest", |p, _| p.harvest()),
                ("fetch-fulltext", |p, _| p.fetch_fulltext()),
                ("convert", |p, _| p.convert()),
                ("detect", |p, _| p.detect()),
                ("analyze", |p, _| p.analyze()),
                ("report", |p, o| p.report(o)),
            ];
            for (name, f) in stages {
                let s = f(&pipeline, out).map_err(|e| Failure::from_pipeline(name, e))?;
                print_summary(&s);
            }
            return Ok(());
        }
        _ => unreachable!("handled elsewhere"),
    };
    for s in result.map_err(|e| Failure::from_pipeline(stage, e))? {
        print_summary(&s);
    }
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Result<(), Failure> {
    let c = compare_index_files(a, b).map_err(|e| Failure::from_pipeline("compare-index", e))?;
    let v = json!({
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "size_a": c.a_in_b.denominator,
        "size_b": c.b_in_a.denominator,
        "intersection": c.a_in_b.numerator,
        "a_in_b": c.a_in_b.value(),
        "b_in_a": c.b_in_a.value(),
    });
    println!("{v}");
    Ok(())
}

/// Detector output from a finished run, when the config points at one.
fn detector_output(config: &Config) -> Option<DetectorOutput> {
    let read = |name: &str| std::fs::read_to_string(config.work_path(name)).ok();
    let converted: ConvertedArtifact = serde_json::from_str(&read(CONVERTED_ARTIFACT)?).ok()?;
    let detections: DetectionsArtifact = serde_json::from_str(&read(DETECTIONS_ARTIFACT)?).ok()?;
    Some(DetectorOutput::from_detections(converted.papers.into_iter().map(|p| p.paper_id), &detections.detections))
}

fn serve(cli: &Cli, root: &Path, addr: SocketAddr) -> Result<(), Failure> {
    let fail = |kind, message: String| Failure { code: 1, kind, stage: Some("serve"), message, artifact: None };
    let (detected, registry) = match Config::load(&cli.config) {
        Ok(config) => {
            let registry = load_dataset_registry(&config.resolve(&config.datasets)).unwrap_or_default();
            (detector_output(&config), registry)
        }
        Err(_) => (None, Vec::new()),
    };
    if detected.is_none() {
        log::warn!("no detector output found; the agreement endpoint is disabled");
    }
    let store = Store::open(root).map_err(|e| fail("StorageError", e.to_string()))?;
    let state = Arc::new(AppState { store, detected, registry });
    serve_blocking(addr, state).map_err(|e| fail("IoError", e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::CompareIndex { a, b } => compare(a, b),
        Command::Serve { root, addr } => serve(&cli, root, *addr),
        _ => run_pipeline(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.emit();
            ExitCode::from(f.code)
        }
    }
}
