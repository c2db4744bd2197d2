use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "redd",
    version,
    about = "Topic-filtered disinformation triage over page embeddings"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, validate and annotate page corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Embed page text and project embeddings to the reduced space.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Build, calibrate and apply topic centroids.
    #[command(subcommand)]
    Topic(TopicCmd),
    /// Train the classifier, score pages, check gradients.
    #[command(subcommand)]
    Redd(ReddCmd),
    /// Metrics and scripted experiments.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Domain aggregation, review queues and decision merges.
    #[command(subcommand)]
    Triage(TriageCmd),
    /// Run the review service.
    Serve(ServeArgs),
    /// Run the full pipeline from a config file or the synthetic default.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Topic-filter fixture with on-topic and off-topic pages.
    Ablation,
    /// Five well-separated categories in 768 dimensions.
    Clustered,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Generate a synthetic corpus from a preset or a spec file.
    #[command(group(ArgGroup::new("source").required(true).args(["preset", "spec"])))]
    Generate {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Synthetic spec, TOML or JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a corpus file and print its manifest.
    Validate { corpus: PathBuf },
    /// Attach externally computed embeddings (`{"page_id", "embedding"}` lines).
    ImportEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// `full` or `reduced`.
        #[arg(long, default_value = "reduced")]
        field: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// Fill full embeddings with the deterministic hashed-token embedder.
    Text {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        /// Weight of the per-language component, in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        lang_weight: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian random projection of full embeddings.
    Project {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 100)]
        d_red: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also save the projection matrix.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TopicCmd {
    /// Average example pages into a topic centroid.
    #[command(group(ArgGroup::new("pick").required(true).args(["category", "examples"])))]
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        id: String,
        /// Sample example pages from train pages carrying this category.
        #[arg(long)]
        category: Option<String>,
        /// Explicit example page ids.
        #[arg(long, value_delimiter = ',')]
        examples: Vec<String>,
        #[arg(long, default_value_t = 20)]
        n_examples: usize,
        #[arg(long, value_delimiter = ',')]
        edges: Vec<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        created_at: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bucket pages by similarity and sample each bucket for review.
    Buckets {
        #[arg(long)]
        topic: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        sample_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose a threshold from a bucket report with relevance fractions filled in.
    SelectThreshold {
        #[arg(long)]
        report: PathBuf,
    },
    /// Calibrate with relevance taken from page categories.
    Calibrate {
        #[arg(long)]
        topic: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 20)]
        sample_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Keep pages at or above the topic threshold.
    Filter {
        #[arg(long)]
        topic: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Training config (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `linear` or `nonlinear`.
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ReddCmd {
    /// Train on the labeled train split.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, default_value_t = 1)]
        version: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every page with a reduced embedding.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare backprop gradients with finite differences on a random model.
    Gradcheck {
        #[arg(long, default_value = "nonlinear")]
        architecture: String,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "16,8,4")]
        hidden_dims: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
    Unassigned,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Share of k nearest neighbours that share a category.
    Psamecat {
        #[arg(long)]
        corpus: PathBuf,
        /// `full` or `reduced`.
        #[arg(long, default_value = "reduced")]
        field: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// ROC AUC of a score file against its labels.
    Auc {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Precision at k of a review queue given its decisions.
    PAtK {
        #[arg(long)]
        queue: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, default_value_t = 40)]
        k: usize,
    },
    /// Mean and std of scores by class and focus/other language.
    Langtable {
        #[arg(long)]
        scores: PathBuf,
        /// Corpus supplying page languages.
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to the most common language among the selected pages.
        #[arg(long)]
        focus: Option<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Filtered versus unfiltered training on the synthetic topic fixture.
    Ablation {
        /// Ablation config (TOML); defaults to the built-in fixture.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Language-dominated versus language-agnostic embeddings.
    Confound {
        /// Confound spec (TOML); defaults to the built-in one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TriageCmd {
    /// Aggregate page scores per domain.
    Aggregate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_pages: usize,
        /// `mean`, `median` or `trimmed:<fraction>`.
        #[arg(long, default_value = "mean")]
        aggregation: String,
        #[arg(long, default_value_t = 1)]
        model_version: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank aggregated domains and cut a review queue.
    Queue {
        /// Output of `triage aggregate`.
        #[arg(long)]
        domains: PathBuf,
        #[arg(long, default_value_t = 300)]
        cutoff: usize,
        #[arg(long)]
        queue_id: String,
        #[arg(long)]
        topic_id: String,
        #[arg(long, default_value_t = 0)]
        created_at: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision at k, baseline and rank histogram of a reviewed queue.
    Evaluate {
        #[arg(long)]
        queue: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, default_value_t = 40)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        bin: usize,
    },
    /// Fold decisions into corpus labels.
    Merge {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        /// Only touch pages passing this topic's filter.
        #[arg(long)]
        topic: Option<PathBuf>,
        /// Label policy (TOML).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    /// Seed for calibration sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initialise an empty data directory from a pipeline run directory.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "synthetic"])))]
pub struct RunArgs {
    /// Pipeline config (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the built-in synthetic fixture.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub d_red: Option<usize>,
    #[arg(long)]
    pub projection_seed: Option<u64>,
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub decision_log: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}
