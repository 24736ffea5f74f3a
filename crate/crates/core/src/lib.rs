//! Ownership-management engine: an event-sourced attribution store, point-in-time
//! featurization, interpretable owner-recommendation models, explanations and
//! health reporting, plus a simulator with planted owners.

pub mod engine;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod health;
pub mod ingest;
pub mod labeling;
pub mod learn;
pub mod model;
pub mod persist;
pub mod recommend;
pub mod sim;
pub mod time;

pub use engine::{DecisionInput, Engine};
pub use error::Error;
