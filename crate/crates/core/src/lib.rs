//! Mean-field density estimation for agent swarms.

pub mod agents;
pub mod config;
pub mod consensus;
pub mod distributed;
pub mod error;
pub mod filter;
pub mod grid;
pub mod kde;
pub mod metrics;
pub mod model;
pub mod output;
pub mod reference;
pub mod scenario;

pub use error::{Error, Result};
