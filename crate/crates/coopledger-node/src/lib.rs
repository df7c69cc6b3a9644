//! coopledger-node: persistence, service endpoints, CLI, and the scripted
//! demo around the `coopledger-core` state machine.

pub mod cli;
pub mod config;
pub mod demo;
pub mod http;
pub mod node;
pub mod store;

pub use config::NodeConfig;
pub use node::{Node, NodeError};
pub use store::{NodeStore, StoreError};
