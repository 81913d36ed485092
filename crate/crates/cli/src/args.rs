//! Command-line surface: four subcommands sharing data-source and
//! reproducibility flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stackids::data::LabelMode;

#[derive(Parser)]
#[command(
    name = "stackids",
    version,
    about = "Train and evaluate stacked deep-learning intrusion detectors on UNSW-NB15-style flow records"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Load a dataset, print its composition and write encoded caches.
    Ingest(IngestArgs),
    /// Train one configuration and save the model plus its report.
    Train(TrainArgs),
    /// Evaluate a saved model on a replayed split.
    Evaluate(EvaluateArgs),
    /// Train several configurations on one split and rank them.
    Compare(CompareArgs),
}

/// Where the records come from: a CSV with a schema, or the embedded
/// thousand-row fixture.
#[derive(Args)]
pub struct DataArgs {
    /// Dataset CSV path.
    #[arg(long, conflicts_with = "fixture")]
    pub data: Option<PathBuf>,

    /// Schema JSON path; defaults to the built-in UNSW-NB15 schema.
    #[arg(long, requires = "data")]
    pub schema: Option<PathBuf>,

    /// Use the embedded fixture dataset instead of --data.
    #[arg(long)]
    pub fixture: bool,
}

fn parse_mode(s: &str) -> Result<LabelMode, String> {
    LabelMode::parse(s).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub source: DataArgs,

    /// Target encoding: binary (normal vs attack) or multiclass.
    #[arg(long, default_value = "multiclass", value_parser = parse_mode)]
    pub label_mode: LabelMode,

    /// Share of rows held out for testing.
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,

    /// Seed for the split and oversampling draws.
    #[arg(long, default_value_t = stackids::models::DEFAULT_SEED)]
    pub seed: u64,

    /// Output directory; defaults under the STACKIDS_OUT root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: DataArgs,

    /// Named preset to train.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,

    /// JSON model configuration file to train.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value = "multiclass", value_parser = parse_mode)]
    pub label_mode: LabelMode,

    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,

    /// Seed for the split, initialization and shuffling; overrides the
    /// config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Epoch-count override, applied to ensemble members as well.
    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Train,
    Test,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Saved model file to evaluate.
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub source: DataArgs,

    /// Which side of the replayed split to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: EvalSplit,

    /// Must match the model's own label mode when given.
    #[arg(long, value_parser = parse_mode)]
    pub label_mode: Option<LabelMode>,

    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,

    /// Split seed; defaults to the seed stored in the model file.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Training report for the table's epoch and timing columns;
    /// defaults to train_report.json beside the model file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: DataArgs,

    /// Named preset to include; repeatable.
    #[arg(long = "preset")]
    pub presets: Vec<String>,

    /// JSON model configuration file to include; repeatable.
    #[arg(long = "config")]
    pub configs: Vec<PathBuf>,

    /// Include every built-in preset.
    #[arg(long)]
    pub all_presets: bool,

    #[arg(long, default_value = "multiclass", value_parser = parse_mode)]
    pub label_mode: LabelMode,

    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,

    /// Shared seed for the split and every member.
    #[arg(long, default_value_t = stackids::models::DEFAULT_SEED)]
    pub seed: u64,

    /// Epoch-count override applied to every member.
    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}
