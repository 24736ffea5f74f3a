//! Append-only event log with deterministic replay.
//!
//! Log file format (UTF-8, one record per line):
//!
//! ```text
//! <sequence>\t<kind>\t<crc32 hex>\t<payload>
//! ```
//!
//! `payload` is a JSON object `{"v":1,"recorded_at":<secs|null>,"data":{...}}`
//! whose `data` member is the event body for `kind`. The checksum covers
//! `<sequence>\t<kind>\t<payload>`. Sequence numbers start at 0 and are dense.
//! A torn final record (missing newline or bad checksum on the last line) is
//! truncated on open; damage anywhere else is reported as [`PersistError::CorruptLog`].

mod event;
mod journal;

pub use event::{CandidateRegistration, Event, InteractionBatch, OwnerChangeRecord};
pub use journal::{
    decode_line, encode_line, read_log, replay, replay_lines, FileJournal, Journal, MemoryJournal,
    StoredEvent,
};

use thiserror::Error;

pub const PAYLOAD_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("event rejected: {0}")]
    Validation(#[from] crate::model::ModelError),
    #[error("storage full")]
    StorageFull,
    #[error("store is locked by another writer")]
    StoreLocked,
    #[error("engine state diverged from its log after a failed write; reopen the store")]
    Poisoned,
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for PersistError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            PersistError::StorageFull
        } else {
            PersistError::Io(e)
        }
    }
}
