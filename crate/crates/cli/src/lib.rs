//! Command-line front-end: corpus ingestion, tokenization, BPE, validation,
//! analysis and embedding metrics.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtf_core::analysis::Format;
use mtf_core::tok::Scheme;
use mtf_core::tse::ErrorPolicy;

pub mod commands;
pub mod fsio;
pub mod pipeline;

pub const DEFAULT_SEED: u64 = 20_230_717;
pub const GENERATION_BPE_SIZE: usize = 2000;
pub const DEFAULT_BPE_SIZE: usize = 5000;

/// An error caused by the arguments rather than the data; exits with 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "mtf", version, about = "Symbolic music tokenization toolkit")]
pub struct Cli {
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (0 picks one per core)
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize MIDI files and write one token file per input and scheme
    Tokenize(TokenizeArgs),
    /// Turn token files back into MIDI
    Detokenize(DetokenizeArgs),
    /// Learn a BPE merge table from token files
    BpeTrain(BpeTrainArgs),
    /// Encode (or decode) token files with a BPE model
    BpeApply(BpeApplyArgs),
    /// Token syntax error report over token files
    Validate(ValidateArgs),
    /// Note histograms, succession matrices and error reports
    Analyze(AnalyzeArgs),
    /// Write pitch- and velocity-shifted copies of MIDI files
    Augment(AugmentArgs),
    /// Cosine densities, contrastive loss and intrinsic dimension
    EmbedMetrics(EmbedMetricsArgs),
    /// Quantize, augment, tokenize, train BPE and analyze in one run
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Strict,
    Lenient,
}

impl From<PolicyArg> for ErrorPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => ErrorPolicy::Strict,
            PolicyArg::Lenient => ErrorPolicy::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Generation,
    Default,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: mtf_core::tok::TokError| e.to_string())
}

/// Comma-separated integer offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offsets(pub Vec<i32>);

fn parse_offsets(s: &str, limit: i32) -> Result<Offsets, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: i32 = t.parse().map_err(|_| format!("{t:?} is not an integer"))?;
            if v.abs() > limit {
                return Err(format!("offset {v} outside [-{limit}, {limit}]"));
            }
            Ok(v)
        })
        .collect::<Result<_, _>>()
        .map(Offsets)
}

fn parse_pitch_offsets(s: &str) -> Result<Offsets, String> {
    parse_offsets(s, 87)
}

fn parse_vel_offsets(s: &str) -> Result<Offsets, String> {
    parse_offsets(s, 7)
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Token scheme; repeat for several (default: all four)
    #[arg(long = "scheme", value_parser = parse_scheme)]
    pub schemes: Vec<Scheme>,
}

impl SchemeArgs {
    pub fn resolved(&self) -> Vec<Scheme> {
        if self.schemes.is_empty() {
            return Scheme::ALL.to_vec();
        }
        let mut out = Vec::new();
        for s in &self.schemes {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Args)]
pub struct OffsetArgs {
    /// Comma-separated semitone shifts
    #[arg(long, value_parser = parse_pitch_offsets, allow_hyphen_values = true,
          default_value = "-24,-12,12,24")]
    pub pitch_offsets: Offsets,
    /// Comma-separated velocity-bin shifts
    #[arg(long, value_parser = parse_vel_offsets, allow_hyphen_values = true,
          default_value = "-1,1")]
    pub vel_offsets: Offsets,
}

#[derive(Debug, Clone, Args)]
pub struct BpeSizeArgs {
    /// Target vocabulary size including the base vocabulary
    #[arg(long)]
    pub bpe_size: Option<usize>,
    /// Picks the default BPE size: 2000 for generation, 5000 otherwise
    #[arg(long, value_enum, default_value_t = Profile::Default)]
    pub profile: Profile,
}

impl BpeSizeArgs {
    pub fn target(&self) -> usize {
        self.bpe_size.unwrap_or(match self.profile {
            Profile::Generation => GENERATION_BPE_SIZE,
            Profile::Default => DEFAULT_BPE_SIZE,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct TokenizeArgs {
    /// MIDI file or directory of .mid files
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub schemes: SchemeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DetokenizeArgs {
    /// Token file or directory of token files
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Model used to decode BPE-encoded inputs
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Lenient)]
    pub policy: PolicyArg,
    /// Resolution of the written MIDI files
    #[arg(long, default_value_t = 480)]
    pub tpq: u16,
}

#[derive(Debug, Clone, Args)]
pub struct BpeTrainArgs {
    /// Directory of base token files, all of one scheme
    #[arg(long)]
    pub input: PathBuf,
    /// Model file to write
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub size: BpeSizeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BpeApplyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Decode BPE token files instead of encoding base ones
    #[arg(long)]
    pub decode: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model used to decode BPE-encoded inputs
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    /// Expected scheme; files of another scheme abort the run
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Add one row per file
    #[arg(long)]
    pub per_file: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Report file (default: standard output)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Directory of token files of one scheme
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    /// Output formats; repeat for several (default: all)
    #[arg(long = "format", value_enum)]
    pub formats: Vec<FormatArg>,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub offsets: OffsetArgs,
    #[arg(long, default_value_t = 480)]
    pub tpq: u16,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedMetricsArgs {
    /// Embeddings (EMB1 or CSV)
    #[arg(long)]
    pub z: PathBuf,
    /// Paired embeddings of the augmented sequences
    #[arg(long)]
    pub zbar: Option<PathBuf>,
    /// Contrastive loss temperature (loss is skipped without it)
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lpca_alpha: f64,
    #[arg(long, default_value_t = 20)]
    pub mom_k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub twonn_discard: f64,
    #[arg(long)]
    pub output: PathBuf,
    /// Formats of the cosine density artifact
    #[arg(long = "format", value_enum)]
    pub formats: Vec<FormatArg>,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Directory of .mid files
    #[arg(long)]
    pub input: PathBuf,
    /// Run directory
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub schemes: SchemeArgs,
    #[command(flatten)]
    pub size: BpeSizeArgs,
    #[command(flatten)]
    pub offsets: OffsetArgs,
    #[arg(long, value_enum, default_value_t = PolicyArg::Lenient)]
    pub policy: PolicyArg,
    #[arg(long = "format", value_enum)]
    pub formats: Vec<FormatArg>,
}

pub fn resolve_formats(formats: &[FormatArg]) -> Vec<Format> {
    let all = [FormatArg::Csv, FormatArg::Json, FormatArg::Svg];
    let chosen = if formats.is_empty() { &all[..] } else { formats };
    let mut out: Vec<Format> = Vec::new();
    for &f in chosen {
        if !out.contains(&f.into()) {
            out.push(f.into());
        }
    }
    out
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.jobs > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match cli.command {
        Command::Tokenize(a) => commands::tokenize(&a),
        Command::Detokenize(a) => commands::detokenize(&a),
        Command::BpeTrain(a) => commands::bpe_train(&a),
        Command::BpeApply(a) => commands::bpe_apply(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::EmbedMetrics(a) => commands::embed_metrics(&a),
        Command::Pipeline(a) => pipeline::run(&a, cli.seed),
    }
}
