//! DynoNet: dialogue agents over a dynamic knowledge graph. Node
//! embeddings come from mention vectors and message passing; utterances
//! are encoded with entity abstraction and decoded with attention and a
//! copy mechanism over graph nodes. StanoNet is the static-graph variant.

pub mod agent;
pub mod config;
pub mod error;
pub mod model;
pub mod net;
pub mod tokens;
pub mod train;
pub mod vocab;

pub use agent::{register, NeuralAgent};
pub use config::ModelConfig;
pub use error::{DynoError, Result};
pub use model::{build_vocab, halve_select, sampling_distribution, Example, Model, Reply};
pub use net::{DialogueState, Live, Net};
pub use tokens::{Step, Tok};
pub use train::{split_811, train, EpochReport, TrainOptions, TrainReport, Trainer};
pub use vocab::Vocab;
