//! Session service, model-server shim and batch CLI on top of
//! `segedit-core`.

pub mod api;
pub mod cli;
pub mod model_server;
pub mod server;
pub mod store;
