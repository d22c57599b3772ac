use std::sync::Arc;

use mutualfriends_core::{Agent, AgentOutput, AgentRegistry, AgentSetup, Event, Resources, Result};
use rand::RngCore;

use crate::model::Model;
use crate::net::DialogueState;

/// A neural agent driven by a [`Model`] (DynoNet or StanoNet).
pub struct NeuralAgent {
    model: Arc<Model>,
    resources: Arc<Resources>,
    state: DialogueState,
    kind: String,
    failure: Option<String>,
}

impl NeuralAgent {
    pub fn new(model: Arc<Model>, setup: &AgentSetup, kind: &str) -> Result<Self> {
        let state = model
            .start(setup.kb(), setup.side)
            .map_err(|e| mutualfriends_core::Error::Agent(e.to_string()))?;
        Ok(Self {
            model,
            resources: setup.resources.clone(),
            state,
            kind: kind.to_string(),
            failure: None,
        })
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }
}

impl Agent for NeuralAgent {
    fn kind(&self) -> &str {
        &self.kind
    }

    fn observe(&mut self, event: &Event) {
        if let Err(e) = self.model.observe(&mut self.state, event) {
            self.failure.get_or_insert(e.to_string());
        }
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<Vec<AgentOutput>> {
        if let Some(f) = &self.failure {
            return Err(mutualfriends_core::Error::Agent(f.clone()));
        }
        Ok(self
            .model
            .sample_reply(&self.state, &self.resources.surface_forms, rng)
            .outputs)
    }
}

/// Registers `model` under `name` (usually `dynonet` or `stanonet`).
pub fn register(registry: &mut AgentRegistry, name: &str, model: Arc<Model>) {
    let kind = name.to_string();
    registry.register(name, move |setup: &AgentSetup| {
        Ok(Box::new(NeuralAgent::new(model.clone(), setup, &kind)?) as Box<dyn Agent>)
    });
}
