use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use adaptids::client::{Client, ClientError};
use adaptids::{load_flows, Bootstrap};
use adaptids_core::cluster::{cluster_novelties, posttrain, write_cluster_report};
use adaptids_core::experiment::{run_experiment_grid, run_pipeline, write_report, RunConfig};
use adaptids_core::heads::{evaluate_open_set, Detector, HeadType, UNKNOWN_TRAIN};
use adaptids_core::ingest::{flows_from_capture, generate_synthetic, load_manifest, write_manifest, LabeledFlow};
use adaptids_core::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "adaptids", version, about = "Adaptable open-set intrusion detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn captures or the synthetic generator into a flow manifest.
    Ingest(IngestArgs),
    /// Train a detector on a manifest.
    Train(TrainArgs),
    /// Closed- and open-set accuracy of a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Cluster the flows a checkpoint rejects.
    Cluster(ClusterArgs),
    /// Apply the clustering-aware fine-tuning stage to a checkpoint.
    Posttrain(PosttrainArgs),
    /// Run the experiment grid and write the report tables.
    Experiment(ExperimentArgs),
    /// Run the detection service and HTTP API.
    Serve(ServeArgs),
    /// Analyst actions against a running service.
    Label(LabelArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, required_unless_present = "synthetic", requires = "label")]
    pcap: Vec<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long, conflicts_with = "pcap")]
    synthetic: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flows per class; the config value when absent.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, default_value_t = adaptids::IDLE_TIMEOUT_SECS)]
    idle_timeout: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Head to train; the first configured head when absent.
    #[arg(long)]
    head: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Flows of known classes are scored closed-set, all others as novelty.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PosttrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed an empty state dir with this checkpoint.
    #[arg(long, requires = "manifest")]
    bootstrap: Option<PathBuf>,
    /// Training manifest of the bootstrap checkpoint.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, env = "ADAPTIDS_TOKEN")]
    token: Option<String>,
    #[command(subcommand)]
    action: LabelAction,
}

#[derive(Subcommand)]
enum LabelAction {
    Status,
    /// List novelty clusters.
    List,
    Show {
        id: u64,
    },
    Samples {
        id: u64,
        #[arg(long, default_value_t = adaptids::api::MAX_SAMPLES)]
        limit: usize,
    },
    /// Record the analyst decision for a cluster.
    Decide {
        id: u64,
        /// MALICIOUS, UNSEEN_BENIGN or TEMPORARY_ANOMALY.
        #[arg(long)]
        category: String,
        /// New class name, required for MALICIOUS.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        analyst: Option<String>,
    },
    /// Cluster the buffered unknowns now.
    Cluster,
    Retrain,
    Report,
}

fn load_config(path: Option<&PathBuf>) -> adaptids_core::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn print(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn ingest(a: IngestArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let flows = if a.synthetic {
        generate_synthetic(&cfg.pool_profiles()?, a.per_class.unwrap_or(cfg.flows_per_class), a.seed)?
    } else {
        let label = a.label.as_deref().expect("required by clap");
        let mut flows = Vec::new();
        for p in &a.pcap {
            let (f, stats) = flows_from_capture(p, label, a.idle_timeout)?;
            tracing::info!(file = %p.display(), flows = f.len(), ?stats, "capture ingested");
            flows.extend(f);
        }
        flows
    };
    write_manifest(&a.out, &flows)?;
    print(&json!({ "flows": flows.len(), "manifest": a.out }))
}

/// Restricts `flows` to the trained classes, relabeling the configured
/// unknown-train label for DOC++.
fn training_flows(flows: Vec<LabeledFlow>, classes: &[String], head: HeadType, unknown: Option<&str>) -> Vec<LabeledFlow> {
    flows
        .into_iter()
        .filter_map(|mut f| {
            if classes.contains(&f.label) {
                Some(f)
            } else if head == HeadType::DocPp && (Some(f.label.as_str()) == unknown || f.label == UNKNOWN_TRAIN) {
                f.label = UNKNOWN_TRAIN.to_string();
                Some(f)
            } else {
                None
            }
        })
        .collect()
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let head = match &a.head {
        Some(h) => HeadType::parse(h)?,
        None => cfg.heads[0],
    };
    let flows = load_manifest(&a.manifest, None)?;
    let classes: Vec<String> = if cfg.known.is_empty() {
        let labels: BTreeSet<&String> = flows
            .iter()
            .map(|f| &f.label)
            .filter(|l| l.as_str() != UNKNOWN_TRAIN && Some(*l) != cfg.unknown_train.as_ref())
            .collect();
        labels.into_iter().cloned().collect()
    } else {
        cfg.known.clone()
    };
    let flows = training_flows(flows, &classes, head, cfg.unknown_train.as_deref());
    let mut detector = Detector::untrained(classes, head, &cfg.open_set, cfg.train.seed)?;
    let outcome = run_pipeline(&mut detector, &flows, &cfg.train, None)?;
    let hash = detector.save(&a.out)?;
    print(&json!({
        "checkpoint": a.out,
        "hash": hash,
        "head": head,
        "classes": detector.classes(),
        "training_flows": flows.len(),
        "train": outcome.train,
    }))
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let detector = Detector::load(&a.checkpoint)?;
    let (known, novelty): (Vec<_>, Vec<_>) = load_manifest(&a.manifest, None)?
        .into_iter()
        .partition(|f| detector.classes().contains(&f.label));
    print(&evaluate_open_set(&detector, &known, &novelty)?)
}

fn cluster(a: ClusterArgs) -> anyhow::Result<()> {
    let detector = Detector::load(&a.checkpoint)?;
    let flows = load_flows(&a.manifest)?;
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for f in &flows {
        let s = detector.score(&f.tensor)?;
        if s.verdict.is_unknown() {
            ids.push(f.id.clone());
            points.push(s.particularized);
        }
    }
    if ids.is_empty() {
        return Err(Error::Invalid("the checkpoint rejects none of the flows".into()).into());
    }
    let known: Vec<(String, Vec<f32>)> = detector.state().centroids.clone().into_iter().collect();
    let records = cluster_novelties(&ids, &points, &known, a.seed)?;
    write_cluster_report(&a.out, &records)?;
    print(&json!({ "rejected": ids.len(), "clusters": records.len(), "report": a.out }))
}

fn posttrain_cmd(a: PosttrainArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let mut detector = Detector::load(&a.checkpoint)?;
    let classes = detector.classes().to_vec();
    let flows = training_flows(load_manifest(&a.manifest, None)?, &classes, detector.head(), cfg.unknown_train.as_deref());
    let report = posttrain(&mut detector, &flows, &cfg.train, &cfg.posttrain)?;
    let hash = detector.save(&a.out)?;
    print(&json!({ "checkpoint": a.out, "hash": hash, "posttrain": report }))
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let labels: Vec<String> = cfg.pool_profiles()?.into_iter().map(|p| p.class_name).collect();
    let output = run_experiment_grid(&cfg)?;
    let files = write_report(&a.out, &output, &labels, cfg.mode_suffix())?;
    print(&json!({ "experiments": output.records.len(), "files": files }))
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let bootstrap = a.bootstrap.map(|checkpoint| Bootstrap {
        checkpoint,
        manifest: a.manifest.expect("required by clap"),
    });
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(adaptids::serve(cfg, bootstrap))
}

fn label(a: LabelArgs) -> anyhow::Result<()> {
    let c = Client::new(&a.url, a.token);
    let out: Value = match a.action {
        LabelAction::Status => c.get("/status")?,
        LabelAction::List => c.get("/clusters")?,
        LabelAction::Show { id } => c.get(&format!("/clusters/{id}"))?,
        LabelAction::Samples { id, limit } => c.get(&format!("/clusters/{id}/samples?limit={limit}"))?,
        LabelAction::Decide {
            id,
            category,
            name,
            analyst,
        } => {
            let mut body = json!({ "category": category.to_ascii_uppercase() });
            if let Some(n) = name {
                body["name"] = n.into();
            }
            if let Some(an) = analyst {
                body["analyst"] = an.into();
            }
            c.post(&format!("/clusters/{id}/label"), Some(&body))?
        }
        LabelAction::Cluster => c.post("/clustering", None)?,
        LabelAction::Retrain => c.post("/retrain", None)?,
        LabelAction::Report => c.get("/report/latest")?,
    };
    print(&out)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(e) = e.downcast_ref::<Error>() {
        e.exit_code() as u8
    } else if let Some(e) = e.downcast_ref::<ClientError>() {
        e.exit_code() as u8
    } else {
        1
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Cluster(a) => cluster(a),
        Command::Posttrain(a) => posttrain_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Serve(a) => serve(a),
        Command::Label(a) => label(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
