//! The `mutualfriends` command line: argument parsing, config-file
//! merging, artifact manifests and one function per subcommand.

pub mod args;
pub mod chat;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

use std::io::BufReader;
use std::path::PathBuf;

use args::{ChatArgs, Cli, Command};
use error::Result;
use mutualfriends_core::session::Limits;
use mutualfriends_core::Resources;
use settings::Settings;

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::GenScenarios { shared, n } => commands::gen_scenarios(Settings::load(config, "gen-scenarios")?, &shared, n),
        Command::Selfplay(a) => commands::selfplay(Settings::load(config, "selfplay")?, a),
        Command::Train(a) => commands::train_cmd(Settings::load(config, "train")?, a),
        Command::Eval(a) => commands::eval(Settings::load(config, "eval")?, a),
        Command::Analyze { shared, input, scenarios } => {
            commands::analyze(Settings::load(config, "analyze")?, &shared, input, scenarios)
        }
        Command::Chat(a) => chat_cmd(Settings::load(config, "chat")?, a),
        Command::Serve(a) => commands::serve(Settings::load(config, "serve")?, a),
    }
}

fn chat_cmd(mut settings: Settings, args: ChatArgs) -> Result<()> {
    let c = commands::common(&mut settings, &args.shared)?;
    let bot = settings.pick("bot", args.bot, "rule".to_string())?;
    let models = settings.list("model", args.model)?;
    let index = settings.pick("scenario-index", args.scenario_index, 0)?;
    let clock = settings.pick(
        "clock",
        args.clock.map(|c| format!("{c:?}").to_lowercase()),
        "simulated".to_string(),
    )?;
    let clock = commands::parse_clock(&clock)?;
    let forms_path: Option<PathBuf> = settings.maybe("surface-forms", args.surface_forms)?;
    let registry = commands::registry(&models, None, &c.schema)?;
    commands::check_agent(&registry, &bot)?;
    let forms = commands::surface_forms(forms_path.as_deref(), &c.schema)?;
    let resources = Resources::new(c.schema, forms);
    let mut manifest = manifest::Manifest::new("chat", &c.out)?;
    let options = chat::ChatOptions {
        bot,
        seed: c.seed,
        scenario_index: index,
        clock,
        limits: Limits::default(),
    };
    let stdin = std::io::stdin();
    let transcript = chat::chat(&registry, &resources, &options, BufReader::new(stdin.lock()), std::io::stdout())?;
    manifest.write("transcript.jsonl", transcript.to_jsonl().as_bytes())?;
    manifest.finish(settings.resolved)
}

/// Exit code for a finished run.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => e.code(),
    }
}
