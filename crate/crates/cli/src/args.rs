use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use verbsense::acquire::PromptKind;
use verbsense::io::PairsFormat;
use verbsense::Algorithm;

#[derive(Debug, Parser)]
#[command(
    name = "verbsense",
    version,
    about = "Verb sense clustering and ambiguity-aware evaluation"
)]
pub struct Cli {
    /// TOML file with defaults for any flag; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Query a multimodal model for verbs per image and build pair nodes.
    Acquire(AcquireArgs),
    /// Validate a pairs file, optionally converting it between formats.
    Ingest(IngestArgs),
    /// Run two-step clustering and write a cluster model.
    Cluster(ClusterArgs),
    /// Silhouette, Calinski-Harabasz and purity of a model's final clusters.
    Metrics(MetricsArgs),
    /// Score predictions under gold, synset and cluster criteria.
    Eval(EvalArgs),
    /// Ambiguity statistics of a model.
    Ambiguity(AmbiguityArgs),
    /// Cluster accuracy across re-clusterings at several granularities.
    Sweep(SweepArgs),
    /// Top-k accuracy of a precomputed image-by-verb similarity matrix.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// `image_id \t path-or-url` per line.
    #[arg(long)]
    pub images: PathBuf,
    /// `image_id \t gold_verb` per line.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub prompt: Option<PromptKind>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Pair nodes without embeddings: `image \t verb \t source`.
    #[arg(long)]
    pub out_nodes: PathBuf,
    /// Lexicon-filtered reply verbs per image, for the sweep baseline.
    #[arg(long)]
    pub out_raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Rewrite the validated corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: PairsFormat,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long = "algo")]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Comma-separated Step-2 ratios.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub synsets: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub synsets: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for `accuracy.tsv` and `breakdown.tsv`.
    #[arg(long)]
    pub tsv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AmbiguityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub preds: PathBuf,
    /// Unclustered reference verbs: `image \t v1,v2,...`.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Curve data for plotting.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}
