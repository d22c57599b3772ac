use serde::{Deserialize, Serialize};

/// Model and training hyperparameters. Stored next to checkpoints as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub emb: usize,
    /// Message-passing depth.
    #[serde(rename = "K")]
    pub k: usize,
    /// Entity abstraction; off adds per-entity identity embeddings.
    pub abstraction: bool,
    /// Off gives StanoNet: graph and mention vectors frozen at the start.
    pub dynamic: bool,
    pub lr: f64,
    pub temperature: f64,
    pub seed: u64,
    /// Per-component mention gate instead of a scalar one.
    pub vector_gate: bool,
    pub rel_dim: usize,
    pub max_len: usize,
    pub halve_select: bool,
    pub init_accumulator: f64,
    pub clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            emb: 100,
            k: 2,
            abstraction: true,
            dynamic: true,
            lr: 0.5,
            temperature: 0.5,
            seed: 0,
            vector_gate: false,
            rel_dim: 16,
            max_len: 20,
            halve_select: true,
            init_accumulator: 0.1,
            clip_norm: 5.0,
        }
    }
}

impl ModelConfig {
    pub fn stanonet() -> Self {
        Self {
            dynamic: false,
            ..Self::default()
        }
    }

    /// Agent type name this configuration plays as.
    pub fn agent_kind(&self) -> &'static str {
        if self.dynamic {
            "dynonet"
        } else {
            "stanonet"
        }
    }

    pub fn mention_dim(&self) -> usize {
        2 * self.hidden
    }
}
