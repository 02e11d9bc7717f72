//! Point-transformer slide classification trained in a simulated federation.
//!
//! Slides are point clouds: each point carries a position `(px, py, 1)` and a
//! feature vector. The [`model`] is a stack of vector-attention and
//! abstraction stages that samples points by farthest cosine sampling
//! ([`geometry`]); the [`federated`] module trains it across simulated sites
//! with federated averaging, subsampling of majority-class slides early in
//! training and a site-local auxiliary head. [`data`] generates synthetic
//! sites and reads and writes slide files. [`engine`] is the small
//! reverse-mode differentiation engine underneath.

pub mod binfmt;
pub mod data;
pub mod demo;
pub mod engine;
pub mod federated;
pub mod geometry;
pub mod gradcheck;
pub mod model;
pub mod rng;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error("{}{source}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Format { path: Option<PathBuf>, source: binfmt::FormatError },
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Federation(#[from] federated::FederationError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<binfmt::FormatError> for Error {
    fn from(source: binfmt::FormatError) -> Self {
        Error::Format { path: None, source }
    }
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/engine.md")]
    struct Engine;
    #[doc = include_str!("../../../book/src/sampling.md")]
    struct Sampling;
    #[doc = include_str!("../../../book/src/model.md")]
    struct ModelChapter;
    #[doc = include_str!("../../../book/src/federation.md")]
    struct Federation;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
