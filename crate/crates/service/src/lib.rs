//! Rollout server and command line for envforge environments.
//!
//! The server keeps one [`envforge_core::Episode`] per session and speaks a
//! newline-delimited JSON protocol (`spec`, `reset`, `step`, `close`) over
//! stdio or TCP.

pub mod cli;
pub mod protocol;
pub mod recorder;
pub mod server;
pub mod transport;

pub use protocol::{ErrorCode, ProtocolError, PROTOCOL_VERSION};
pub use recorder::TrajectoryRecorder;
pub use server::{Server, ServerConfig};
