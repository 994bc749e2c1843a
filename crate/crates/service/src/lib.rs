//! CLI and live streaming service for holoquilt.
//!
//! [`pipeline::Renderer`] runs one frame through the core pipeline.
//! [`session::Session`] holds the live state a client steers with
//! [`protocol::ControlMessage`]s, and [`server::serve`] exposes it over
//! WebSocket.

pub mod bench;
pub mod cli;
pub mod pipeline;
pub mod protocol;
pub mod server;
pub mod session;
