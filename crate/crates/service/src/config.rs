use std::path::PathBuf;

use mutualfriends_core::session::Limits;
use serde::{Deserialize, Serialize};

/// Opponent kind that means "another visitor".
pub const HUMAN: &str = "human";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    pub storage_dir: PathBuf,
    /// Directory with the browser client; not served when absent.
    pub static_dir: Option<PathBuf>,
    pub scenario_seed: u64,
    /// Seeds pairing, side assignment and bot randomness.
    pub seed: u64,
    /// Opponent weights keyed by `human` or a registered agent name.
    pub mix: Vec<(String, f64)>,
    pub limits: Limits,
    /// A human gone this long loses the dialogue.
    pub abandon_ms: u64,
    /// A queued visitor is given a bot after this long, if bots are in
    /// the mix.
    pub human_wait_ms: Option<u64>,
    /// A bot with nothing to say speaks up after this much silence.
    pub bot_idle_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            storage_dir: PathBuf::from("data"),
            static_dir: None,
            scenario_seed: 0,
            seed: 0,
            mix: vec![(HUMAN.to_string(), 1.0), ("rule".to_string(), 1.0)],
            limits: Limits::default(),
            abandon_ms: 30_000,
            human_wait_ms: Some(20_000),
            bot_idle_ms: 15_000,
        }
    }
}

impl ServiceConfig {
    /// Parses `human=2,rule=1,dynonet=1`.
    pub fn parse_mix(text: &str) -> Result<Vec<(String, f64)>, String> {
        text.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (name, w) = part
                    .split_once('=')
                    .ok_or_else(|| format!("expected name=weight, got {part:?}"))?;
                let w: f64 = w.trim().parse().map_err(|_| format!("bad weight in {part:?}"))?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(format!("weight must be a nonnegative number in {part:?}"));
                }
                Ok((name.trim().to_string(), w))
            })
            .collect()
    }
}
