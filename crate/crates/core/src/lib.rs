//! Label-free accuracy estimation for frozen embedding models.

pub mod bench;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod evaluator;
pub mod fsutil;
pub mod meta;
pub mod metaset;
pub mod metrics;
pub mod seed;
pub mod synth;
pub mod workload;

pub use error::{Error, Result};
