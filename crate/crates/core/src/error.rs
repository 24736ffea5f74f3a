use thiserror::Error;

use crate::ingest::IngestError;
use crate::learn::LearnError;
use crate::model::{AssetType, ModelError};
use crate::persist::PersistError;
use crate::sim::SimError;

/// Any failure surfaced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Persist(PersistError),
    #[error(transparent)]
    Learn(LearnError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no trained model for asset type {0}")]
    NoModelForAssetType(AssetType),
}

impl From<PersistError> for Error {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Validation(m) => Error::Model(m),
            other => Error::Persist(other),
        }
    }
}

impl From<LearnError> for Error {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Model(m) => Error::Model(m),
            other => Error::Learn(other),
        }
    }
}
