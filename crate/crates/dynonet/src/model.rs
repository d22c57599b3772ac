use std::collections::HashMap;
use std::fs;
use std::path::Path;

use mutualfriends_autodiff::{softmax, ParamStore, Tape};
use mutualfriends_core::kgraph::NodeKind;
use mutualfriends_core::lexicon::realize_entity;
use mutualfriends_core::{AgentOutput, Event, Kb, Scenario, Schema, Side, SurfaceFormStore, Transcript};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{DynoError, Result};
use crate::net::{DialogueState, Net};
use crate::tokens::{compile_event, event_words, Step, Tok};
use crate::vocab::{Vocab, BOS, EOS, SELECT, UNK};

/// One training example: a dialogue from one participant's perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub scenario_id: String,
    pub side: Side,
    pub kb: Kb,
    pub steps: Vec<Step>,
}

/// A trained (or freshly initialised) model.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Net,
    pub store: ParamStore,
}

/// A sampled reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub tokens: Vec<Tok>,
    pub outputs: Vec<AgentOutput>,
}

/// Builds the word vocabulary from transcripts.
pub fn build_vocab(transcripts: &[Transcript], min_count: usize) -> Vocab {
    let words: Vec<String> = transcripts
        .iter()
        .flat_map(|t| t.events.iter().flat_map(event_words))
        .collect();
    Vocab::build(words.iter().map(String::as_str), min_count)
}

/// Multiplies the SELECT probability by one half and renormalises.
pub fn halve_select(probs: &mut [f64], select: usize) {
    probs[select] *= 0.5;
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
}

/// Index of the largest entry (first on ties).
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Sampling distribution over vocab ∪ nodes: disallowed entries removed,
/// temperature applied (zero means argmax), SELECT optionally halved.
pub fn sampling_distribution(
    logits: &[f64],
    allowed: &[bool],
    temperature: f64,
    halve: Option<usize>,
) -> Vec<f64> {
    let masked: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(&x, &ok)| if ok { x } else { f64::NEG_INFINITY })
        .collect();
    let mut probs = if temperature <= 0.0 {
        let mut p = vec![0.0; masked.len()];
        p[argmax(&masked)] = 1.0;
        p
    } else {
        softmax(&masked, temperature)
    };
    if let Some(s) = halve {
        if allowed[s] && probs[s] < 1.0 {
            halve_select(&mut probs, s);
        }
    }
    probs
}

impl Model {
    pub fn new(config: ModelConfig, schema: Schema, vocab: Vocab) -> Self {
        let (net, store) = Net::new(config, schema, vocab);
        Self { net, store }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn kind(&self) -> &'static str {
        self.net.config.agent_kind()
    }

    /// Compiles `transcript` from `side`'s point of view.
    pub fn example(&self, transcript: &Transcript, scenario: &Scenario, side: Side) -> Example {
        let n = &self.net;
        Example {
            scenario_id: scenario.id.clone(),
            side,
            kb: scenario.kb(side).clone(),
            steps: transcript
                .events
                .iter()
                .filter_map(|e| compile_event(e, &n.vocab, &n.entities, &n.schema))
                .collect(),
        }
    }

    /// Two examples per successful dialogue; others are skipped.
    pub fn examples(&self, transcripts: &[Transcript], scenarios: &[Scenario]) -> Vec<Example> {
        let by_id: HashMap<&str, &Scenario> = scenarios.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut out = Vec::new();
        for t in transcripts.iter().filter(|t| t.is_success()) {
            if let Some(s) = by_id.get(t.scenario_id.as_str()) {
                out.push(self.example(t, s, Side::A));
                out.push(self.example(t, s, Side::B));
            }
        }
        out
    }

    /// Summed token NLL and scored token count, without gradients.
    pub fn example_nll(&self, ex: &Example) -> Result<(f64, usize)> {
        let mut t = Tape::new(&self.store);
        let (loss, n) = self.net.example_loss(&mut t, ex)?;
        Ok((loss.map(|l| t.value(l).item()).unwrap_or(0.0), n))
    }

    /// Per-token cross-entropy over a set of examples.
    pub fn per_token_loss(&self, examples: &[Example]) -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for ex in examples {
            let (l, n) = self.example_nll(ex)?;
            total += l;
            count += n;
        }
        if count == 0 {
            return Err(DynoError::EmptyCorpus);
        }
        Ok(total / count as f64)
    }

    pub fn start(&self, kb: &Kb, side: Side) -> Result<DialogueState> {
        let mut t = Tape::new(&self.store);
        let b = self.net.bind(&mut t);
        let live = self.net.start(&mut t, &b, kb, side)?;
        Ok(self.net.state_from_live(&t, live))
    }

    pub fn observe_step(&self, state: &mut DialogueState, step: &Step) -> Result<()> {
        let mut t = Tape::new(&self.store);
        let b = self.net.bind(&mut t);
        let mut live = self.net.live_from_state(&mut t, state);
        self.net.observe(&mut t, &b, &mut live, step)?;
        *state = self.net.state_from_live(&t, live);
        Ok(())
    }

    pub fn observe(&self, state: &mut DialogueState, event: &Event) -> Result<()> {
        let n = &self.net;
        match compile_event(event, &n.vocab, &n.entities, &n.schema) {
            Some(step) => self.observe_step(state, &step),
            None => Ok(()),
        }
    }

    /// Output distribution (temperature 1, nothing masked) for the token
    /// after `prefix` in the next utterance.
    pub fn next_distribution(&self, state: &DialogueState, prefix: &[Tok]) -> Vec<f64> {
        let mut t = Tape::new(&self.store);
        let b = self.net.bind(&mut t);
        let live = self.net.live_from_state(&mut t, state);
        let mut st = self.net.decode_start(&mut t, &b, &live);
        let mut logits = self.net.decode_step(&mut t, &b, &live, &mut st);
        for &tok in prefix {
            st.prev = tok;
            logits = self.net.decode_step(&mut t, &b, &live, &mut st);
        }
        softmax(&t.value(logits).data, 1.0)
    }

    fn allowed(&self, state: &DialogueState, after_select: bool) -> Vec<bool> {
        let vocab = self.net.dims.vocab;
        let mut ok = vec![!after_select; vocab];
        if !after_select {
            ok[UNK] = false;
            ok[BOS] = false;
        }
        for node in state.graph.nodes() {
            ok.push(match node.kind {
                NodeKind::Item(_) => after_select,
                NodeKind::Entity(_) => !after_select,
                NodeKind::Attribute(_) => false,
            });
        }
        ok
    }

    /// Samples the next reply token by token.
    pub fn sample_tokens<R: Rng + ?Sized>(&self, state: &DialogueState, temperature: f64, rng: &mut R) -> Vec<Tok> {
        let net = &self.net;
        let mut t = Tape::new(&self.store);
        let b = net.bind(&mut t);
        let live = net.live_from_state(&mut t, state);
        let mut st = net.decode_start(&mut t, &b, &live);
        let mut out = Vec::new();
        let halve = net.config.halve_select.then_some(SELECT);
        for _ in 0..net.config.max_len {
            let after_select = out.last() == Some(&Tok::Word(SELECT));
            let logits = net.decode_step(&mut t, &b, &live, &mut st);
            let allowed = self.allowed(state, after_select);
            let probs = sampling_distribution(&t.value(logits).data, &allowed, temperature, halve);
            let idx = sample_index(&probs, rng);
            if idx == EOS {
                break;
            }
            let tok = if idx < net.dims.vocab {
                Tok::Word(idx)
            } else {
                let node = &state.graph.nodes()[idx - net.dims.vocab];
                match node.kind {
                    NodeKind::Item(i) => Tok::Item(i),
                    _ => Tok::Entity(net.entities.index(&node.label).expect("schema entity")),
                }
            };
            out.push(tok);
            if matches!(tok, Tok::Item(_)) {
                break;
            }
            st.prev = tok;
        }
        out
    }

    /// Turns sampled tokens into agent actions, realizing entities as text.
    pub fn realize<R: Rng + ?Sized>(&self, tokens: &[Tok], surface: &SurfaceFormStore, rng: &mut R) -> Vec<AgentOutput> {
        let net = &self.net;
        let mut words = Vec::new();
        let mut outputs = Vec::new();
        let mut select = None;
        for (i, &tok) in tokens.iter().enumerate() {
            match tok {
                Tok::Word(SELECT) => {
                    if let Some(Tok::Item(item)) = tokens.get(i + 1) {
                        select = Some(*item);
                    }
                    break;
                }
                Tok::Word(w) => words.push(net.vocab.word(w).to_string()),
                Tok::Entity(e) => {
                    let entity = net.schema.entity(&net.entities.ids[e]).expect("schema entity");
                    words.push(realize_entity(entity, surface, rng));
                }
                Tok::Item(_) => {}
            }
        }
        if !words.is_empty() {
            outputs.push(AgentOutput::Utterance(words.join(" ")));
        }
        if let Some(item) = select {
            outputs.push(AgentOutput::Select(item));
        }
        outputs
    }

    pub fn sample_reply<R: Rng + ?Sized>(
        &self,
        state: &DialogueState,
        surface: &SurfaceFormStore,
        rng: &mut R,
    ) -> Reply {
        let tokens = self.sample_tokens(state, self.net.config.temperature, rng);
        let outputs = self.realize(&tokens, surface, rng);
        Reply { tokens, outputs }
    }

    /// Writes `config.json`, `vocab.json`, `schema.json` and `params.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| DynoError::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| DynoError::io(&p, e))
        };
        write("config.json", serde_json::to_string_pretty(&self.net.config)?)?;
        write("vocab.json", serde_json::to_string(&self.net.vocab)?)?;
        write("schema.json", self.net.schema.to_json())?;
        write("params.json", self.store.to_json())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| DynoError::io(&p, e))
        };
        let config: ModelConfig = serde_json::from_str(&read("config.json")?)?;
        let vocab: Vocab = serde_json::from_str(&read("vocab.json")?)?;
        let schema = Schema::from_json(&read("schema.json")?)?;
        let store = ParamStore::from_json(&read("params.json")?)?;
        let mut model = Self::new(config, schema, vocab);
        for id in model.store.ids().collect::<Vec<_>>() {
            let name = model.store.name(id).to_string();
            let loaded = store
                .id(&name)
                .map(|i| store.get(i))
                .ok_or_else(|| DynoError::Mismatch(format!("missing tensor `{name}`")))?;
            if loaded.shape != model.store.get(id).shape {
                return Err(DynoError::Mismatch(format!("shape of `{name}`")));
            }
            *model.store.get_mut(id) = loaded.clone();
        }
        Ok(model)
    }
}
