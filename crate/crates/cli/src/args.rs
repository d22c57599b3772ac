use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mutualfriends", version, about = "Collaborative dialogue toolkit: scenarios, bots, training, evaluation and a chat service")]
pub struct Cli {
    /// TOML file with defaults; flags win over it. Keys are long flag
    /// names, shared ones at top level and the rest under `[subcommand]`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    #[arg(long)]
    pub seed: Option<u64>,
    /// `bundled`, `small` or a schema JSON file.
    #[arg(long)]
    pub schema: Option<String>,
    /// Directory for all artifacts and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Simulated,
    Real,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded scenarios as JSON lines.
    GenScenarios {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Bot-vs-bot dialogues.
    Selfplay(SelfplayArgs),
    /// Fit a DynoNet or StanoNet model on transcripts.
    Train(TrainArgs),
    /// Corpus statistics table.
    Eval(EvalArgs),
    /// First-mentioned attribute histogram as CSV.
    Analyze {
        #[command(flatten)]
        shared: Shared,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Line-based chat against a bot in the terminal.
    Chat(ChatArgs),
    /// Run the chat service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SelfplayArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Agent type on side A: rule, dynonet, stanonet, replay or a
    /// name given with --model.
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Scenario file; without it `n` scenarios are generated from the seed.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub clock: Option<ClockArg>,
    /// `NAME=DIR` or `DIR` (named after the model's own kind). Repeatable.
    #[arg(long)]
    pub model: Vec<String>,
    /// Transcripts replayed by the `replay` agent.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Recorded surface forms (JSON, entity → form → count).
    #[arg(long)]
    pub surface_forms: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Base model configuration (JSON); single flags override it.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub emb: Option<usize>,
    /// Message-passing depth.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub abstraction: Option<bool>,
    /// false trains StanoNet.
    #[arg(long)]
    pub dynamic: Option<bool>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub min_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Words seen fewer times become UNK.
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Transcript file, optionally `NAME=FILE`. Repeatable; one row each.
    #[arg(long = "in")]
    pub input: Vec<String>,
    /// Scenarios of the transcripts; enables the strategy columns.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Model checkpoint; enables the loss column.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub bot: Option<String>,
    #[arg(long)]
    pub model: Vec<String>,
    /// Which scenario of the seeded sequence to play.
    #[arg(long)]
    pub scenario_index: Option<usize>,
    #[arg(long, value_enum)]
    pub clock: Option<ClockArg>,
    #[arg(long)]
    pub surface_forms: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub port: Option<u16>,
    /// Opponent weights, e.g. `human=2,rule=1,dynonet=1`.
    #[arg(long)]
    pub mix: Option<String>,
    /// Transcript and rating store; defaults to `<out>/service`.
    #[arg(long)]
    pub storage: Option<PathBuf>,
    /// Browser client directory.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub scenario_seed: Option<u64>,
    #[arg(long)]
    pub model: Vec<String>,
    #[arg(long)]
    pub surface_forms: Option<PathBuf>,
}
