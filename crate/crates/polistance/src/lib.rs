//! Dataset IO, resource files, LLM annotation clients, experiment runners
//! and the `polistance` command line, on top of `polistance-core`.

pub mod annotate;
pub mod artifacts;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod resources;

pub use error::{Error, Result};
pub use polistance_core as core;
