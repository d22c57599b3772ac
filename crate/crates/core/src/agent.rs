//! The agent interface and the by-name registry used to pick dialogue
//! strategies at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::scenario::{Kb, Scenario};
use crate::schema::{Schema, SurfaceFormStore};
use crate::transcript::{Event, EventKind, Side, Transcript};

/// Read-only data shared by every agent and session.
#[derive(Debug)]
pub struct Resources {
    pub schema: Schema,
    pub lexicon: Lexicon,
    pub surface_forms: SurfaceFormStore,
}

impl Resources {
    pub fn new(schema: Schema, surface_forms: SurfaceFormStore) -> Arc<Self> {
        let lexicon = Lexicon::build(&schema);
        Arc::new(Self {
            schema,
            lexicon,
            surface_forms,
        })
    }
}

/// What an agent wants to do on one activation.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentOutput {
    Utterance(String),
    /// Index into the agent's own KB.
    Select(usize),
}

pub trait Agent: Send {
    fn kind(&self) -> &str;

    /// Called for every event of the dialogue, the agent's own included.
    fn observe(&mut self, event: &Event);

    /// Candidate outputs for this activation; the session applies pacing
    /// and may drop some of them.
    fn act(&mut self, rng: &mut dyn RngCore) -> Result<Vec<AgentOutput>>;
}

/// Everything a factory needs to build an agent for one side of a scenario.
#[derive(Clone)]
pub struct AgentSetup {
    pub resources: Arc<Resources>,
    pub scenario: Scenario,
    pub side: Side,
}

impl AgentSetup {
    pub fn kb(&self) -> &Kb {
        self.scenario.kb(self.side)
    }
}

pub type AgentFactory = Box<dyn Fn(&AgentSetup) -> Result<Box<dyn Agent>> + Send + Sync>;

/// Agent constructors keyed by type name (`rule`, `dynonet`, ...).
#[derive(Default)]
pub struct AgentRegistry {
    factories: BTreeMap<String, AgentFactory>,
}

impl fmt::Debug for AgentRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl AgentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry with the agents this crate provides (`rule`).
    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.register("rule", |setup| {
            Ok(Box::new(crate::rulebot::RuleBot::new(setup)) as Box<dyn Agent>)
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&AgentSetup) -> Result<Box<dyn Agent>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str, setup: &AgentSetup) -> Result<Box<dyn Agent>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownAgent(name.to_string()))?;
        factory(setup)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// Replays one side of a recorded transcript, one burst per activation.
pub struct ReplayAgent {
    bursts: std::vec::IntoIter<Vec<AgentOutput>>,
}

impl ReplayAgent {
    pub fn new(transcript: &Transcript, side: Side) -> Self {
        let mut bursts: Vec<Vec<AgentOutput>> = Vec::new();
        let mut prev: Option<Side> = None;
        for e in &transcript.events {
            let out = match e.kind {
                EventKind::Typing => continue,
                EventKind::Utterance => AgentOutput::Utterance(e.text.clone().unwrap_or_default()),
                EventKind::Select => match &e.item {
                    Some(item) => AgentOutput::Select(item.index),
                    None => continue,
                },
            };
            if e.agent == side {
                if prev != Some(side) {
                    bursts.push(Vec::new());
                }
                bursts.last_mut().expect("burst opened").push(out);
            }
            prev = Some(e.agent);
        }
        Self {
            bursts: bursts.into_iter(),
        }
    }
}

impl Agent for ReplayAgent {
    fn kind(&self) -> &str {
        "replay"
    }

    fn observe(&mut self, _event: &Event) {}

    fn act(&mut self, _rng: &mut dyn RngCore) -> Result<Vec<AgentOutput>> {
        Ok(self.bursts.next().unwrap_or_default())
    }
}
