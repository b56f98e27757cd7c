//! `mmu-eval`: command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when a
//! remote translator, judge or generator fails.

mod clients;
mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use inputs::InputSpec;
use mmu_eval::datagen::DatagenError;
use mmu_eval::judges::{ClientError, JudgeError};
use mmu_eval::metrics::Case;
use mmu_eval::report::OutputFormat;
use mmu_eval::ScoreMode;

#[derive(Parser, Debug)]
#[command(
    name = "mmu-eval",
    version,
    about = "Knowledge-wise evaluation of multilingual unlearning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute every metric for one record file and write an evaluation document.
    Evaluate(EvaluateArgs),
    /// Knowledge separability table with relative increases against a baseline.
    Kss(KssArgs),
    /// Knowledge persistence table per base language.
    Kps(TableArgs),
    /// Generate a synthetic record file with known ground truth.
    Simulate(SimulateArgs),
    /// Run a scenario over a range of one parameter.
    Sweep(SweepArgs),
    /// Sample profiles, build QA pairs and translate them with verification.
    Datagen(DatagenArgs),
    /// Fill semantic-equivalence bits for model outputs.
    Judge(JudgeArgs),
    /// Evaluate unlearning objectives and pruning scores on supplied values.
    Losses(LossesArgs),
    /// Full document: separability, persistence and score distributions.
    Report(KssArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

impl CaseArg {
    fn cases(self) -> Vec<Case> {
        match self {
            CaseArg::One => vec![Case::Case1],
            CaseArg::Two => vec![Case::Case2],
            CaseArg::Both => vec![Case::Case1, Case::Case2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Gen,
    Prob,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<ScoreMode> {
        match self {
            ModeArg::Gen => vec![ScoreMode::Gen],
            ModeArg::Prob => vec![ScoreMode::Prob],
            ModeArg::Both => vec![ScoreMode::Prob, ScoreMode::Gen],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Md => OutputFormat::Markdown,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Case 1 (hold-out languages), Case 2 (training languages) or both.
    #[arg(long, value_enum, default_value = "both")]
    case: CaseArg,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Histogram bins for score distributions.
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// `LABEL[@RATIO]=PATH`: a JSONL record file or an evaluation document (.json). Repeatable.
    #[arg(long = "input", short = 'i', required = true)]
    inputs: Vec<InputSpec>,
    /// Manifest for record files; defaults to manifest.json next to each file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    select: SelectArgs,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    /// Write here instead of stdout.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KssArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Baseline method label, or `LABEL[@RATIO]=PATH` inputs for it. Repeatable.
    #[arg(long)]
    baseline: Vec<String>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// `[LABEL[@RATIO]=]PATH` of a JSONL record file.
    #[arg(long, short = 'i')]
    input: InputSpec,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    select: SelectArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario file (.toml or .json); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a numeric parameter, e.g. `noise=0` or `unlearn_effect.de=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory for records.jsonl, manifest.json and truth.jsonl.
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DatagenArgs {
    /// Number of profiles.
    #[arg(long, short = 'n', default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attribute pools (JSON); the bundled pools otherwise.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Exclusion rules (JSON); the bundled rules otherwise.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// QA templates (JSON); the bundled templates otherwise.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Target languages for translation, comma separated.
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    /// Client services (TOML); offline mocks are used without it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = mmu_eval::datagen::DEFAULT_MAX_ITERATIONS)]
    max_iterations: usize,
    #[arg(long, default_value_t = mmu_eval::datagen::DEFAULT_SKEW_THRESHOLD)]
    skew_threshold: f64,
    /// Allow two profiles to share a full name.
    #[arg(long)]
    allow_duplicate_names: bool,
    /// Format of the skew report printed to stdout.
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct JudgeArgs {
    /// JSONL with instance_id, language, model_output, ground_truth.
    #[arg(long, short = 'i')]
    input: PathBuf,
    /// Verdict cache file, created if missing.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Client services (TOML); offline mocks are used without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only accept these languages, comma separated.
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    /// Do not translate texts already in the pivot language.
    #[arg(long)]
    skip_pivot: bool,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LossesArgs {
    #[command(subcommand)]
    objective: Objective,
    #[arg(long, value_enum, default_value = "md", global = true)]
    format: FormatArg,
}

#[derive(Subcommand, Debug)]
enum Objective {
    /// Mean log-likelihood of the forget answers.
    Ga {
        #[arg(long)]
        forget: PathBuf,
    },
    /// Forget log-likelihood minus retain log-likelihood.
    Gagdr {
        #[arg(long)]
        forget: PathBuf,
        #[arg(long)]
        retain: PathBuf,
    },
    /// Forget log-likelihood plus mean KL on retain distributions.
    Gaklr {
        #[arg(long)]
        forget: PathBuf,
        /// JSONL of {current, reference} probability vectors.
        #[arg(long)]
        retain: PathBuf,
    },
    /// Negative preference optimisation loss.
    Npo {
        #[arg(long)]
        forget: PathBuf,
        #[arg(long, default_value_t = mmu_eval::unlearn::DEFAULT_BETA)]
        beta: f64,
    },
    /// Language-agnostic neuron pruning scores.
    Importance {
        /// Activations: binary (.bin) or JSONL of {activations, tag}.
        #[arg(long)]
        activations: PathBuf,
        #[arg(long, default_value_t = mmu_eval::unlearn::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Only list the highest-scoring neurons.
        #[arg(long)]
        top: Option<usize>,
    },
}

/// 3 for remote-service failures anywhere in the chain, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let transport = err.chain().any(|cause| {
        cause.is::<ClientError>()
            || cause.is::<commands::TransportFailure>()
            || cause
                .downcast_ref::<JudgeError>()
                .is_some_and(JudgeError::is_transport)
            || cause
                .downcast_ref::<DatagenError>()
                .is_some_and(DatagenError::is_transport)
    });
    if transport {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
