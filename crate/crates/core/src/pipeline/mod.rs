//! Batch commands behind the `hsp` binary.

pub mod commands;
pub mod config;
pub mod fixture;
pub mod overlay;

pub use commands::*;
pub use config::PipelineConfig;
pub use fixture::{make_fixture, Fixture, FixtureManifest};
