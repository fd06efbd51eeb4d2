use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use varcal::cpd::Normalization;
use varcal::sampler::PromptMode;

#[derive(Debug, Parser)]
#[command(name = "varcal", version, about = "Compare language-model next-word distributions with human answer distributions")]
pub struct Cli {
    /// File of `key = value` lines supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a response table into the canonical dataset.
    Ingest(IngestArgs),
    /// Draw generations from an endpoint, reusing a cache.
    Sample(SampleArgs),
    /// Turn generations into model distributions.
    Estimate(EstimateArgs),
    /// Per-context TVD/entropy plus calibration and expected-TVD tables.
    Evaluate(EvaluateArgs),
    /// Controlled studies.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Regress model-oracle TVD on context predictors with ARD.
    Regress(RegressArgs),
    /// Syntactic and semantic TVD.
    #[command(subcommand)]
    Abstract(AbstractCommand),
    /// Histograms, KDE curves, top-k comparisons and tables.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Replace k% of model distributions with oracle estimates.
    Improve(ImproveArgs),
    /// Monte Carlo error of smaller sample sizes.
    Subsample(SubsampleArgs),
    /// Evaluation over first BPE tokens.
    Token(TokenArgs),
}

#[derive(Debug, Subcommand)]
pub enum AbstractCommand {
    /// TVD over part-of-speech tags.
    Syn(SynArgs),
    /// TVD over word-embedding clusters.
    Sem(SemArgs),
}

/// Comma-separated values.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

/// `A,B` oracle half sizes, or `half` for an even split of all answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSizes(pub Option<(usize, usize)>);

impl FromStr for OracleSizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "half" {
            return Ok(OracleSizes(None));
        }
        let parts: Vec<&str> = s.split(',').collect();
        let [a, b] = parts[..] else {
            return Err(format!("expected `A,B` or `half`, got `{s}`"));
        };
        let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
        let (a, b) = (p(a)?, p(b)?);
        if a == 0 || b == 0 {
            return Err("oracle sizes must be positive".into());
        }
        Ok(OracleSizes(Some((a, b))))
    }
}

/// `;`-separated list of oracle sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSizeList(pub Vec<OracleSizes>);

impl FromStr for OracleSizeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(';').map(str::parse).collect::<Result<_, _>>().map(OracleSizeList)
    }
}

pub fn parse_prompt_mode(s: &str) -> Result<PromptMode, String> {
    s.parse().map_err(|e: varcal::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory for all artifacts of this run.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelInput {
    /// Model distributions written by `estimate`.
    #[arg(long, conflicts_with = "generations")]
    pub model_cpds: Option<PathBuf>,
    /// Generations, estimated on the fly with the Monte Carlo estimator.
    #[arg(long)]
    pub generations: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalOpts {
    /// Oracle half sizes `A,B`, or `half`.
    #[arg(long, default_value = "half")]
    pub oracle_sizes: OracleSizes,
    #[arg(long, default_value_t = 20)]
    pub resamples: usize,
    /// Confidence bins for ECE.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

/// How raw words are matched between humans and models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WordMatch {
    /// Lowercase and strip surrounding punctuation.
    Folded,
    /// Keep the word as written; for sensitivity checks.
    Exact,
}

impl From<WordMatch> for Normalization {
    fn from(m: WordMatch) -> Self {
        match m {
            WordMatch::Folded => Normalization::Folded,
            WordMatch::Exact => Normalization::Exact,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the file extension (`.jsonl` is canonical, else CSV).
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long, default_value = "passage_id")]
    pub col_passage: String,
    #[arg(long, default_value = "word_number")]
    pub col_wordnum: String,
    #[arg(long, default_value = "context")]
    pub col_context: String,
    #[arg(long, default_value = "word")]
    pub col_target: String,
    #[arg(long, default_value = "response")]
    pub col_response: String,
    /// Column holding a repeat count per row; one answer per row if absent.
    #[arg(long)]
    pub col_count: Option<String>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Word matching for CSV input (default folded); canonical JSONL
    /// records its own and must agree.
    #[arg(long, value_enum)]
    pub normalization: Option<WordMatch>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    pub endpoint_url: String,
    #[arg(long)]
    pub model_id: String,
    #[arg(long, default_value_t = 40)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value = "completion", value_parser = parse_prompt_mode)]
    pub prompt_mode: PromptMode,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// Generation cache, appended to as draws arrive [default: <out-dir>/cache.jsonl].
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Relative frequency of sampled first words.
    Mc,
    /// Renormalized model scores over a constructed candidate set.
    Biased,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EstimateArgs {
    #[arg(long)]
    pub generations: PathBuf,
    #[arg(long, value_enum, default_value = "mc")]
    pub method: Method,
    /// Needed for `--method biased`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub nucleus_generations: Option<PathBuf>,
    #[arg(long)]
    pub greedy_generations: Option<PathBuf>,
    /// Replayed `{context_id, word, log_joint}` scores.
    #[arg(long, conflicts_with = "endpoint_url")]
    pub scores: Option<PathBuf>,
    #[arg(long, requires = "model_id")]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model_id: Option<String>,
    /// Re-slice raw texts under this word matching before estimating.
    #[arg(long, value_enum)]
    pub normalization: Option<WordMatch>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelInput,
    #[command(flatten)]
    pub eval: EvalOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ImproveArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelInput,
    /// Percentages of contexts to replace.
    #[arg(long, default_value = "0,10,20,30,40,50,60,70,80,90,100")]
    pub k: List<u32>,
    /// Number of seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// `;`-separated oracle sizes, each `A,B` or `half`.
    #[arg(long, default_value = "10,10;20,20")]
    pub oracle_sizes: OracleSizeList,
    /// Aggregate written by `evaluate`; its oracle-oracle expected TVD is
    /// the mean the sweep is matched against.
    #[arg(long)]
    pub reference_aggregate: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SubsampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub generations: PathBuf,
    #[arg(long, default_value = "10,20,40,100")]
    pub sizes: List<usize>,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Sizes of the oracle the TVDs are measured against.
    #[arg(long, default_value = "half")]
    pub oracle_sizes: OracleSizes,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TokenArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Raw generations; each one's first token is a draw.
    #[arg(long, conflicts_with = "logits")]
    pub generations: Option<PathBuf>,
    /// `{context_id, token, logprob}` rows of next-token scores.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// BPE merges file.
    #[arg(long)]
    pub merges: PathBuf,
    /// BPE token→id JSON map.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RegressArgs {
    /// Per-context reports written by `evaluate`.
    #[arg(long)]
    pub contexts: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// External `context_id, source, word, tag` annotations; the built-in
    /// tagger is used otherwise.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1e4)]
    pub prune_threshold: f64,
    /// Keep every feature.
    #[arg(long)]
    pub no_prune: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelInput,
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long, default_value = "half")]
    pub oracle_sizes: OracleSizes,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorFormat {
    Text,
    Binary,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SemArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelInput,
    /// word2vec vectors.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Defaults to binary for `.bin` files, text otherwise.
    #[arg(long, value_enum)]
    pub embeddings_format: Option<VectorFormat>,
    /// Load only words that occur in the dataset or model distributions.
    #[arg(long)]
    pub vocab_restrict: bool,
    /// Fixed cluster count instead of the SSE knee.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub n_init: usize,
    #[arg(long, default_value_t = 400)]
    pub max_iter: usize,
    /// Cluster oracle pairs on their own words instead of reusing the
    /// human+model clustering.
    #[arg(long)]
    pub recluster_oracles: bool,
    #[arg(long, default_value = "half")]
    pub oracle_sizes: OracleSizes,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    /// Per-context reports written by `evaluate`.
    #[arg(long)]
    pub contexts: PathBuf,
    /// Aggregate written by `evaluate`, rendered as a table.
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
    /// Sweep rows written by `experiment improve`.
    #[arg(long)]
    pub improve: Option<PathBuf>,
    #[arg(long, requires = "model_cpds")]
    pub dataset: Option<PathBuf>,
    #[arg(long, requires = "dataset")]
    pub model_cpds: Option<PathBuf>,
    /// Contexts to draw paired top-k bars for.
    #[arg(long, requires = "dataset")]
    pub topk_contexts: Option<List<String>>,
    #[arg(long, default_value_t = 15)]
    pub topk: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!("0, 50,100".parse::<List<u32>>().unwrap(), List(vec![0, 50, 100]));
        assert!("1,x".parse::<List<u32>>().is_err());
        assert_eq!("10,10".parse::<OracleSizes>().unwrap(), OracleSizes(Some((10, 10))));
        assert_eq!("half".parse::<OracleSizes>().unwrap(), OracleSizes(None));
        assert!("10".parse::<OracleSizes>().is_err());
        assert!("0,3".parse::<OracleSizes>().is_err());
        assert_eq!("10,10;half".parse::<OracleSizeList>().unwrap().0.len(), 2);
    }
}
