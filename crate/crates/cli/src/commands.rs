use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mutualfriends_core::metrics::{full_stats, histogram_csv, render_table, strategy_stats};
use mutualfriends_core::scenario::{generate_scenarios, read_scenarios};
use mutualfriends_core::schema::load_schema;
use mutualfriends_core::selfplay::self_play;
use mutualfriends_core::session::{validate_pacing, ClockMode, Limits};
use mutualfriends_core::transcript::{read_transcripts, Transcript};
use mutualfriends_core::{Agent, AgentRegistry, ReplayAgent, Resources, Scenario, Schema, SurfaceFormStore};
use mutualfriends_dynonet::{build_vocab, split_811, train, Model, ModelConfig, TrainOptions};
use serde_json::json;

use crate::args::{ClockArg, EvalArgs, SelfplayArgs, ServeArgs, Shared, TrainArgs};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::settings::{default_out, Settings};

/// Seed, schema and output directory after merging flags and file.
pub struct Common {
    pub seed: u64,
    pub schema: Schema,
    pub out: PathBuf,
}

pub fn common(settings: &mut Settings, shared: &Shared) -> Result<Common> {
    let seed = settings.pick("seed", shared.seed, 0)?;
    let schema_spec = settings.pick("schema", shared.schema.clone(), "bundled".to_string())?;
    let out = settings.pick("out", shared.out.clone(), default_out())?;
    Ok(Common {
        seed,
        schema: schema_from(&schema_spec)?,
        out,
    })
}

pub fn schema_from(spec: &str) -> Result<Schema> {
    match spec {
        "bundled" => Ok(Schema::bundled()),
        "small" => Ok(Schema::bundled_small()),
        path => Ok(load_schema(path)?),
    }
}

pub fn clock_mode(c: ClockArg) -> ClockMode {
    match c {
        ClockArg::Simulated => ClockMode::Simulated,
        ClockArg::Real => ClockMode::Real,
    }
}

pub fn surface_forms(path: Option<&Path>, schema: &Schema) -> Result<SurfaceFormStore> {
    let Some(path) = path else {
        return Ok(SurfaceFormStore::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let store: SurfaceFormStore = serde_json::from_str(&text)?;
    store.check_against(schema)?;
    Ok(store)
}

/// Registers `rule`, every `--model` checkpoint and, with transcripts,
/// `replay`.
pub fn registry(models: &[String], replay: Option<Vec<Transcript>>, schema: &Schema) -> Result<AgentRegistry> {
    let mut registry = AgentRegistry::with_builtin();
    for spec in models {
        let (name, dir) = match spec.split_once('=') {
            Some((n, d)) => (Some(n.to_string()), PathBuf::from(d)),
            None => (None, PathBuf::from(spec)),
        };
        let model = Model::load(&dir)?;
        if &model.net.schema != schema {
            return Err(CliError::Data(format!(
                "{}: model was trained on a different schema",
                dir.display()
            )));
        }
        let name = name.unwrap_or_else(|| model.kind().to_string());
        mutualfriends_dynonet::register(&mut registry, &name, Arc::new(model));
    }
    if let Some(transcripts) = replay {
        let by_scenario: HashMap<String, Transcript> = transcripts
            .into_iter()
            .map(|t| (t.scenario_id.clone(), t))
            .collect();
        registry.register("replay", move |setup| {
            let t = by_scenario.get(&setup.scenario.id).ok_or_else(|| {
                mutualfriends_core::Error::Agent(format!("no recorded dialogue for scenario {}", setup.scenario.id))
            })?;
            Ok(Box::new(ReplayAgent::new(t, setup.side)) as Box<dyn Agent>)
        });
    }
    Ok(registry)
}

pub fn check_agent(registry: &AgentRegistry, name: &str) -> Result<()> {
    if registry.contains(name) {
        return Ok(());
    }
    let hint = match name {
        "dynonet" | "stanonet" => format!("; load a checkpoint with --model {name}=DIR"),
        "replay" => "; give the recorded dialogues with --replay FILE".to_string(),
        _ => String::new(),
    };
    Err(CliError::Usage(format!("unknown agent type `{name}`{hint}")))
}

pub fn gen_scenarios(mut settings: Settings, shared: &Shared, n: Option<usize>) -> Result<()> {
    let c = common(&mut settings, shared)?;
    let n = settings.pick("n", n, 200)?;
    let mut manifest = Manifest::new("gen-scenarios", &c.out)?;
    let scenarios = generate_scenarios(&c.schema, n, c.seed)?;
    let mut text = String::new();
    for s in &scenarios {
        s.validate(&c.schema)?;
        text.push_str(&s.to_json_line());
        text.push('\n');
    }
    let path = manifest.write("scenarios.jsonl", text.as_bytes())?;
    println!("wrote {n} scenarios to {}", path.display());
    manifest.finish(settings.resolved)
}

fn write_lines(manifest: &mut Manifest, name: &str, scenarios: &[Scenario]) -> Result<()> {
    let mut text = String::new();
    for s in scenarios {
        text.push_str(&s.to_json_line());
        text.push('\n');
    }
    manifest.write(name, text.as_bytes())?;
    Ok(())
}

fn transcripts_text(transcripts: &[Transcript]) -> String {
    transcripts.iter().map(Transcript::to_jsonl).collect()
}

pub fn selfplay(mut settings: Settings, args: SelfplayArgs) -> Result<()> {
    let c = common(&mut settings, &args.shared)?;
    let a = settings.pick("a", args.a, "rule".to_string())?;
    let b = settings.pick("b", args.b, "rule".to_string())?;
    let n = settings.maybe("n", args.n)?;
    let jobs = settings.pick("jobs", args.jobs, 1)?;
    let clock = settings.pick("clock", args.clock.map(clock_name), "simulated".to_string())?;
    let clock = parse_clock(&clock)?;
    let models = settings.list("model", args.model)?;
    let replay_path = settings.maybe("replay", args.replay)?;
    let forms_path = settings.maybe("surface-forms", args.surface_forms)?;
    let scenarios_path = settings.maybe("scenarios", args.scenarios)?;

    let scenarios = match &scenarios_path {
        Some(p) => {
            let mut all = read_scenarios(p)?;
            for s in &all {
                s.validate(&c.schema)?;
            }
            if let Some(n) = n {
                all.truncate(n);
            }
            all
        }
        None => generate_scenarios(&c.schema, n.unwrap_or(200), c.seed)?,
    };
    let replay = replay_path.as_deref().map(read_transcripts).transpose()?;
    let registry = registry(&models, replay, &c.schema)?;
    check_agent(&registry, &a)?;
    check_agent(&registry, &b)?;
    let forms = surface_forms(forms_path.as_deref(), &c.schema)?;
    let resources = Resources::new(c.schema, forms);
    let limits = Limits::default();

    let mut manifest = Manifest::new("selfplay", &c.out)?;
    let transcripts = self_play(&registry, [&a, &b], &scenarios, &resources, &limits, clock, c.seed, jobs)?;
    let successes = transcripts.iter().filter(|t| t.is_success()).count();
    let violations: usize = transcripts.iter().map(|t| validate_pacing(t, &limits).len()).sum();
    let rate = successes as f64 / transcripts.len().max(1) as f64;
    manifest.write("transcripts.jsonl", transcripts_text(&transcripts).as_bytes())?;
    write_lines(&mut manifest, "scenarios.jsonl", &scenarios)?;
    let summary = json!({
        "a": a, "b": b, "dialogues": transcripts.len(), "successes": successes,
        "success_rate": rate, "pacing_violations": violations,
    });
    manifest.write("selfplay.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "{a} vs {b}: {successes}/{} successful (C = {rate:.3}), pacing violations: {violations}",
        transcripts.len()
    );
    manifest.finish(settings.resolved)
}

fn clock_name(c: ClockArg) -> String {
    match c {
        ClockArg::Simulated => "simulated".into(),
        ClockArg::Real => "real".into(),
    }
}

pub fn parse_clock(s: &str) -> Result<ClockMode> {
    match s {
        "simulated" => Ok(ClockMode::Simulated),
        "real" => Ok(ClockMode::Real),
        other => Err(CliError::Usage(format!("clock must be simulated or real, got `{other}`"))),
    }
}

pub fn train_cmd(mut settings: Settings, args: TrainArgs) -> Result<()> {
    let c = common(&mut settings, &args.shared)?;
    let transcripts_path: PathBuf = settings.require("transcripts", args.transcripts)?;
    let scenarios_path: PathBuf = settings.require("scenarios", args.scenarios)?;
    let mut config = match settings.maybe::<PathBuf>("model-config", args.model_config)? {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            serde_json::from_str(&text)?
        }
        None => ModelConfig::default(),
    };
    config.hidden = settings.pick("hidden", args.hidden, config.hidden)?;
    config.emb = settings.pick("emb", args.emb, config.emb)?;
    config.k = settings.pick("k", args.k, config.k)?;
    config.abstraction = settings.pick("abstraction", args.abstraction, config.abstraction)?;
    config.dynamic = settings.pick("dynamic", args.dynamic, config.dynamic)?;
    config.lr = settings.pick("lr", args.lr, config.lr)?;
    config.seed = c.seed;
    let d = TrainOptions::default();
    let options = TrainOptions {
        max_epochs: settings.pick("max-epochs", args.max_epochs, d.max_epochs)?,
        min_epochs: settings.pick("min-epochs", args.min_epochs, d.min_epochs)?,
        patience: settings.pick("patience", args.patience, d.patience)?,
        batch: settings.pick("batch", args.batch, d.batch)?,
        jobs: settings.pick("jobs", args.jobs, d.jobs)?,
    };
    let min_count = settings.pick("min-count", args.min_count, 1)?;
    if options.batch == 0 || options.max_epochs == 0 {
        return Err(CliError::Usage("batch and max-epochs must be positive".into()));
    }

    let transcripts = read_transcripts(&transcripts_path)?;
    let scenarios = read_scenarios(&scenarios_path)?;
    for s in &scenarios {
        s.validate(&c.schema)?;
    }
    let (tr, dv, te) = split_811(&transcripts, c.seed);
    let vocab = build_vocab(&tr, min_count);
    let mut model = Model::new(config, c.schema, vocab);
    let train_ex = model.examples(&tr, &scenarios);
    let dev_ex = model.examples(&dv, &scenarios);
    let test_ex = model.examples(&te, &scenarios);
    if train_ex.is_empty() {
        return Err(CliError::Data("no successful training dialogues with known scenarios".into()));
    }
    println!(
        "{}: {} train / {} dev / {} test examples, vocabulary {}",
        model.kind(),
        train_ex.len(),
        dev_ex.len(),
        test_ex.len(),
        model.net.vocab.len()
    );
    let mut manifest = Manifest::new("train", &c.out)?;
    let report = train(&mut model, &train_ex, &dev_ex, options, |r| {
        let dev = r.dev_loss.map_or("-".to_string(), |d| format!("{d:.4}"));
        println!("epoch {:>3}  train {:.4}  dev {dev}  ({:.1} s)", r.epoch, r.train_loss, r.seconds);
    })?;
    let test_loss = if test_ex.is_empty() {
        None
    } else {
        Some(model.per_token_loss(&test_ex)?)
    };
    model.save(c.out.join("model"))?;
    for f in ["config.json", "vocab.json", "schema.json", "params.json"] {
        manifest.record(&format!("model/{f}"))?;
    }
    let summary = json!({
        "kind": model.kind(),
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "epochs": report.epochs,
        "test_loss": test_loss,
        "dialogues": {"train": tr.len(), "dev": dv.len(), "test": te.len()},
    });
    manifest.write("train_report.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "best epoch {}; test loss {}; model in {}",
        report.best_epoch,
        test_loss.map_or("-".into(), |l| format!("{l:.4}")),
        c.out.join("model").display()
    );
    manifest.finish(settings.resolved)
}

pub fn eval(mut settings: Settings, args: EvalArgs) -> Result<()> {
    let c = common(&mut settings, &args.shared)?;
    let inputs = settings.list("in", args.input)?;
    if inputs.is_empty() {
        return Err(CliError::Usage("--in is required".into()));
    }
    let scenarios = settings
        .maybe::<PathBuf>("scenarios", args.scenarios)?
        .map(|p| read_scenarios(&p))
        .transpose()?;
    let model = settings
        .maybe::<PathBuf>("model", args.model)?
        .map(Model::load)
        .transpose()?;
    let mut rows = Vec::new();
    for spec in &inputs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus").to_string();
                (stem, p)
            }
        };
        let transcripts = read_transcripts(&path)?;
        let loss = match (&model, &scenarios) {
            (Some(m), Some(s)) => {
                let ex = m.examples(&transcripts, s);
                if ex.is_empty() {
                    None
                } else {
                    Some(m.per_token_loss(&ex)?)
                }
            }
            _ => None,
        };
        let stats = full_stats(&transcripts, scenarios.as_deref(), &c.schema, loss)?;
        rows.push((name, stats));
    }
    let table = render_table(&rows);
    let mut manifest = Manifest::new("eval", &c.out)?;
    manifest.write("eval.txt", table.as_bytes())?;
    let json: serde_json::Map<String, serde_json::Value> = rows
        .iter()
        .map(|(n, s)| Ok((n.clone(), serde_json::to_value(s)?)))
        .collect::<Result<_>>()?;
    manifest.write("eval.json", serde_json::to_string_pretty(&json)?.as_bytes())?;
    print!("{table}");
    manifest.finish(settings.resolved)
}

pub fn analyze(mut settings: Settings, shared: &Shared, input: Option<PathBuf>, scenarios: Option<PathBuf>) -> Result<()> {
    let c = common(&mut settings, shared)?;
    let input: PathBuf = settings.require("in", input)?;
    let scenarios_path: PathBuf = settings.require("scenarios", scenarios)?;
    let transcripts = read_transcripts(&input)?;
    let scenarios = read_scenarios(&scenarios_path)?;
    let stats = strategy_stats(&transcripts, &scenarios, &c.schema)?;
    let csv = histogram_csv(&stats.first_attr_histogram);
    let mut manifest = Manifest::new("analyze", &c.out)?;
    manifest.write("histogram.csv", csv.as_bytes())?;
    print!("{csv}");
    manifest.finish(settings.resolved)
}

pub fn serve(mut settings: Settings, args: ServeArgs) -> Result<()> {
    use mutualfriends_service::{http, Hub, ServiceConfig, Storage};

    let c = common(&mut settings, &args.shared)?;
    let d = ServiceConfig::default();
    let port = settings.pick("port", args.port, d.port)?;
    let mix = match settings.maybe("mix", args.mix)? {
        Some(text) => ServiceConfig::parse_mix(&text).map_err(CliError::Usage)?,
        None => d.mix.clone(),
    };
    let storage_dir = settings.pick("storage", args.storage, c.out.join("service"))?;
    let static_dir = settings.maybe("static", args.static_dir)?;
    let scenario_seed = settings.pick("scenario-seed", args.scenario_seed, c.seed)?;
    let models = settings.list("model", args.model)?;
    let forms_path = settings.maybe::<PathBuf>("surface-forms", args.surface_forms)?;

    let registry = registry(&models, None, &c.schema)?;
    let forms = surface_forms(forms_path.as_deref(), &c.schema)?;
    let resources = Resources::new(c.schema, forms);
    let config = ServiceConfig {
        port,
        storage_dir: storage_dir.clone(),
        static_dir: static_dir.clone(),
        scenario_seed,
        seed: c.seed,
        mix,
        ..d
    };
    let storage = Arc::new(Storage::open(&storage_dir)?);
    let hub = Hub::new(config, resources, Arc::new(registry), storage)?;
    let manifest = Manifest::new("serve", &c.out)?;
    manifest.finish(settings.resolved)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
    println!("serving on http://{addr} (storage {})", storage_dir.display());
    runtime
        .block_on(http::serve(hub, addr, static_dir))
        .map_err(|e| CliError::Data(format!("server: {e}")))
}
