//! Core of the MutualFriends collaborative dialogue game: the entity
//! schema, scenario sampling, entity linking, per-agent knowledge graphs,
//! the rule-based agent, the session engine and evaluation metrics.

pub mod agent;
pub mod error;
pub mod kgraph;
pub mod lexicon;
pub mod metrics;
pub mod rulebot;
pub mod scenario;
pub mod schema;
pub mod selfplay;
pub mod session;
pub mod transcript;

pub use agent::{Agent, AgentOutput, AgentRegistry, AgentSetup, ReplayAgent, Resources};
pub use error::{Error, Result};
pub use scenario::{Kb, Scenario};
pub use schema::{Entity, EntityId, Schema, SurfaceFormStore};
pub use transcript::{Event, EventKind, Outcome, Side, SpeechAct, Transcript};
