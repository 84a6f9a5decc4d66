//! Span-based semantic role labeling under syntactic constraints.
//!
//! The crate is organized bottom-up: [`span_algebra`] holds the BIO and span
//! set arithmetic, [`corpus`] the data model and synthetic generator,
//! [`tagger`] a small bidirectional recurrent scorer, [`objectives`] the
//! losses, [`decode`] the constrained decoders, [`train`] the optimization
//! loops, and [`evalmetrics`] scoring and tables. The `synsrl` binary wires
//! them into commands.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod evalmetrics;
pub mod objectives;
pub mod span_algebra;
pub mod tagger;
pub mod train;

pub use error::{Error, Result};
