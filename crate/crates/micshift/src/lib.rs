//! File formats, run configuration and the experiment pipeline around
//! [`micshift_core`].
//!
//! - [`mcsg`]: binary spectrogram files.
//! - [`ckpt`]: checkpoint bundles for conversion models and classifiers.
//! - [`wav`]: WAV ingestion.
//! - [`manifest`]: the on-disk corpus.
//! - [`config`]: the JSON run configuration and its content hash.
//! - [`pipeline`]: the stages the `micshift` binary drives.

pub mod ckpt;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mcsg;
pub mod pipeline;
pub mod wav;

pub use config::{Condition, Provenance, RunConfig};
pub use error::{Error, Result};
pub use pipeline::Pipeline;
