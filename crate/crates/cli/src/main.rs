mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Optimal-transport metaclustering, template extraction and template-guided gating.
#[derive(Parser, Debug)]
#[command(name = "otgate", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summarize a labelled CSV into Gaussian clusters.
    Summarize(SummarizeArgs),
    /// Group a database of cytometries and build one template per group.
    Templates(TemplatesArgs),
    /// Gate a new cytometry with a template bundle.
    Classify(ClassifyArgs),
    /// Compare two labellings of the same events.
    Eval(EvalArgs),
    /// Write a synthetic dataset with a planted group structure.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Summary id; defaults to the file stem.
    #[arg(long)]
    id: Option<String>,
    /// Populations with fewer events are dropped (default d + 2).
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Give every kept population the same weight.
    #[arg(long)]
    equal_weights: bool,
}

#[derive(Args, Debug)]
pub struct TemplatesArgs {
    /// Manifest listing the database; its options are defaults for the flags below.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Extra database CSVs, identified by file stem.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
    /// similarity[:w2|w2-squared|kl|empirical], ot[:...], naive[:...] or mean-kl.
    #[arg(long)]
    metric: Option<String>,
    /// complete, single, average or hdbscan.
    #[arg(long)]
    meta_method: Option<String>,
    /// pooling, density or kbarycenter.
    #[arg(long)]
    template_method: Option<String>,
    /// Number of groups cut from the dendrogram; automatic when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Clusters per k-barycenter template (default: most clusters of any member).
    #[arg(long)]
    template_k: Option<usize>,
    /// Smallest group for hdbscan metaclustering and density templates.
    #[arg(long)]
    min_group_size: Option<usize>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    equal_weights: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Bundle written by `templates`.
    #[arg(long)]
    templates: PathBuf,
    /// Events to gate; a label column, if present, is used as ground truth.
    #[arg(long)]
    input: PathBuf,
    /// Labelled events.
    #[arg(long)]
    output: PathBuf,
    /// Classification report (default: next to the output, `.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// qda-template, qda-nearest, label-transfer-hungarian or label-transfer-fuzzy.
    #[arg(long, default_value = "qda-template")]
    method: String,
    /// Also score every other applicable method in the report.
    #[arg(long)]
    all_methods: bool,
    /// One-column CSV with a cluster id per event, used instead of tclust.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Manifest whose tclust options and seed are defaults for the flags below.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    restriction_c: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Generator settings as JSON; missing fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
    /// Members per group marked as test entries in the manifest.
    #[arg(long, default_value_t = 1)]
    holdout: usize,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure category and exit code.
pub enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let missing = e.chain().any(|c| {
            c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound)
                || matches!(c.downcast_ref::<otgate::Error>(), Some(otgate::Error::Io(io)) if io.kind() == std::io::ErrorKind::NotFound)
        });
        if missing {
            Failure::Usage(e)
        } else {
            Failure::Run(e)
        }
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn kind_of(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<otgate::Error>())
        .map(otgate::Error::kind)
        .unwrap_or("error")
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("OTGATE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("OTGATE_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Summarize(a) => commands::summarize(a),
        Command::Templates(a) => commands::templates(a),
        Command::Classify(a) => commands::classify(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("{}", error_line("usage", &format!("{e:#}")));
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("{}", error_line(kind_of(&e), &format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
