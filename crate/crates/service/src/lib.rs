//! Live chat service: visitors join a lobby, are paired with another
//! visitor or a bot, play one scenario over a socket, and their
//! transcripts and ratings are stored on disk.

pub mod config;
pub mod error;
pub mod http;
pub mod hub;
pub mod live;
pub mod lobby;
pub mod storage;
pub mod wire;

pub use config::ServiceConfig;
pub use error::{Result, ServiceError};
pub use hub::{ClientHandle, Hub};
pub use storage::Storage;
