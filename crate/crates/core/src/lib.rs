//! Mining library adoption, post-adoption usage growth and code fights from
//! git commit histories, with Stack Overflow popularity correlation.
//!
//! The pipeline runs bottom-up: [`ingest`] turns commit streams into ordered
//! histories, [`imports`] replays them into per-commit library LOC,
//! [`adoption`], [`growth`] and [`fight`] derive the analyses, [`so`] indexes
//! Stack Overflow questions, and [`pipeline`] writes the report bundle.

pub mod adoption;
pub mod error;
pub mod fight;
pub mod git;
pub mod growth;
pub mod imports;
pub mod ingest;
pub mod pipeline;
pub mod so;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
