use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;

#[derive(Parser, Debug)]
#[command(name = "hb", version, about = "Templated demographic bias dataset and measurements")]
pub struct Cli {
    /// Registry directory (descriptors.jsonl, nouns.jsonl, templates.jsonl); defaults to the shipped registry.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand; stdout when omitted and a file is expected.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampled variants, mock scorers and corpus sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the registry, or a record file against its schema.
    Validate(ValidateArgs),
    /// Emit the templated sentence dataset.
    Compile(CompileArgs),
    /// Perplexity summaries and pairwise descriptor significance.
    Likelihood(LikelihoodArgs),
    /// Style-based generation bias of a model run.
    Genbias(GenbiasArgs),
    /// Hierarchical clustering of style dimensions.
    ClusterStyles(ClusterArgs),
    /// Label responses for bias-controlled fine-tuning.
    TagBias(TagBiasArgs),
    /// Offensiveness by descriptor and template.
    Offense(OffenseArgs),
    /// Descriptor frequency in a text corpus.
    CorpusFreq(CorpusFreqArgs),
    /// Deterministic stand-in scores for testing pipelines.
    MockScore(MockScoreArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Record file to check; without it the registry is checked.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, requires = "file")]
    pub kind: Option<String>,
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantsArg {
    None,
    All,
    Sampled,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub variants: VariantsArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SummaryBy {
    Axis,
    Template,
    AxisTemplate,
}

#[derive(Args, Debug)]
pub struct LikelihoodArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value = hb_core::likelihood::DEFAULT_TEMPLATE)]
    pub template: String,
    #[arg(long, default_value_t = hb_core::stats::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = hb_core::likelihood::DEFAULT_MIN_LEN)]
    pub min_len: usize,
    #[arg(long, default_value_t = hb_core::likelihood::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Also write a perplexity distribution summary to this CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "axis-template")]
    pub summary_by: SummaryBy,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub styles: PathBuf,
    /// JSON list of style names; generic names are used when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenbiasArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Cluster definitions; defaults to the shipped clusters.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Restrict the main report to one axis.
    #[arg(long)]
    pub axis: Option<String>,
    /// Row label for this model run.
    #[arg(long, default_value = "run")]
    pub label: String,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Print the flat cluster containing this style.
    #[arg(long, requires = "height")]
    pub around: Option<String>,
    #[arg(long)]
    pub height: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TagBiasArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "0")]
    pub alpha: hb_core::mitigation::Alpha,
    /// Tag threshold; 0.0003 and 0.003 are the small- and large-model presets.
    #[arg(long)]
    pub beta: f64,
}

#[derive(Args, Debug)]
pub struct OffenseArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Needed when scores are keyed by response id.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Templates to bucket by descriptor; all scored templates by default.
    #[arg(long)]
    pub template: Vec<String>,
    /// Comma-separated bucket edges from 0 to 1; per-template defaults otherwise.
    #[arg(long)]
    pub edges: Option<String>,
    #[arg(long, default_value_t = hb_core::offense::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "run")]
    pub label: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CorpusFormatArg {
    Text,
    Jsonl,
}

#[derive(Args, Debug)]
pub struct CorpusFreqArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: CorpusFormatArg,
    /// Reservoir-sample this many examples first; 0 scans everything.
    #[arg(long, default_value_t = hb_core::offense::DEFAULT_SAMPLE_SIZE)]
    pub sample: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Ppl,
    Responses,
    Styles,
    Offense,
}

#[derive(Args, Debug)]
pub struct MockScoreArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    /// MockProfile JSON; defaults apply to missing fields.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub emit: Emit,
    /// Responses to score when emitting styles; mock responses otherwise.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub per_sentence: usize,
    /// Where to write the style manifest when emitting styles.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
