use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{Event, PersistError, PAYLOAD_VERSION};
use crate::model::Store;
use crate::time::Timestamp;

/// A decoded log record.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredEvent {
    pub sequence_number: u64,
    pub kind: String,
    pub checksum: u32,
    pub recorded_at: Option<Timestamp>,
    pub event: Event,
}

pub fn encode_line(seq: u64, event: &Event) -> String {
    let body = serde_json::to_value(event).expect("events serialize");
    let data = match body {
        Value::Object(mut map) => map.remove("data").unwrap_or(Value::Null),
        other => other,
    };
    let payload = json!({
        "v": PAYLOAD_VERSION,
        "recorded_at": event.effective_time(),
        "data": data,
    })
    .to_string();
    let kind = event.kind();
    let crc = checksum(seq, kind, &payload);
    format!("{seq}\t{kind}\t{crc:08x}\t{payload}")
}

fn checksum(seq: u64, kind: &str, payload: &str) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(seq.to_string().as_bytes());
    h.update(b"\t");
    h.update(kind.as_bytes());
    h.update(b"\t");
    h.update(payload.as_bytes());
    h.finalize()
}

/// Decodes one record (without its trailing newline). `line_no` is only used in errors.
pub fn decode_line(line: &str, line_no: usize) -> Result<StoredEvent, PersistError> {
    let corrupt = |reason: String| PersistError::CorruptLog {
        line: line_no,
        reason,
    };
    let mut parts = line.splitn(4, '\t');
    let (Some(seq), Some(kind), Some(crc), Some(payload)) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(corrupt("expected 4 tab-separated fields".into()));
    };
    let seq: u64 = seq
        .parse()
        .map_err(|_| corrupt(format!("bad sequence `{seq}`")))?;
    let crc = u32::from_str_radix(crc, 16).map_err(|_| corrupt(format!("bad checksum `{crc}`")))?;
    if checksum(seq, kind, payload) != crc {
        return Err(corrupt("checksum mismatch".into()));
    }
    let mut value: Value =
        serde_json::from_str(payload).map_err(|e| corrupt(format!("payload: {e}")))?;
    let version = value.get("v").and_then(Value::as_u64);
    if version != Some(PAYLOAD_VERSION) {
        return Err(corrupt(format!("unsupported payload version {version:?}")));
    }
    let recorded_at = value.get("recorded_at").and_then(Value::as_i64);
    let data = value
        .get_mut("data")
        .map(Value::take)
        .ok_or_else(|| corrupt("payload has no data".into()))?;
    let event: Event = serde_json::from_value(json!({ "kind": kind, "data": data }))
        .map_err(|e| corrupt(format!("{kind}: {e}")))?;
    Ok(StoredEvent {
        sequence_number: seq,
        kind: kind.to_string(),
        checksum: crc,
        recorded_at,
        event,
    })
}

/// Folds decoded records into a store, stopping after `up_to` when given.
pub fn replay(events: &[StoredEvent], up_to: Option<u64>) -> Result<Store, PersistError> {
    let mut store = Store::new();
    for (i, e) in events.iter().enumerate() {
        if up_to.is_some_and(|n| e.sequence_number > n) {
            break;
        }
        if e.sequence_number != i as u64 {
            return Err(PersistError::CorruptLog {
                line: i + 1,
                reason: format!("expected sequence {i}, found {}", e.sequence_number),
            });
        }
        store
            .apply(e.sequence_number, &e.event)
            .map_err(|err| PersistError::CorruptLog {
                line: i + 1,
                reason: err.to_string(),
            })?;
    }
    Ok(store)
}

/// Decodes and folds complete log lines.
pub fn replay_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    up_to: Option<u64>,
) -> Result<Store, PersistError> {
    let events = lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| decode_line(l, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    replay(&events, up_to)
}

pub trait Journal {
    /// Appends one event; the record is durable when this returns.
    fn append(&mut self, event: &Event) -> Result<u64, PersistError>;

    fn next_sequence(&self) -> u64;
}

/// In-memory log holding encoded lines, byte-identical to what [`FileJournal`] writes.
#[derive(Clone, Debug, Default)]
pub struct MemoryJournal {
    lines: Vec<String>,
}

impl MemoryJournal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.lines {
            out.extend_from_slice(l.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn events(&self) -> Result<Vec<StoredEvent>, PersistError> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, l)| decode_line(l, i + 1))
            .collect()
    }

    /// Writes the whole log to `path` in one go, replacing any existing file.
    pub fn write_to(&self, path: &Path) -> Result<(), PersistError> {
        let mut f = File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }
}

impl Journal for MemoryJournal {
    fn append(&mut self, event: &Event) -> Result<u64, PersistError> {
        let seq = self.lines.len() as u64;
        self.lines.push(encode_line(seq, event));
        Ok(seq)
    }

    fn next_sequence(&self) -> u64 {
        self.lines.len() as u64
    }
}

/// File-backed log holding an exclusive advisory lock for its lifetime.
#[derive(Debug)]
pub struct FileJournal {
    path: PathBuf,
    file: File,
    next: u64,
}

impl FileJournal {
    /// Opens (creating if needed) and locks the log, truncating a torn tail,
    /// and returns the journal with the replayed store.
    pub fn open(path: &Path) -> Result<(Self, Store), PersistError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        match file.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(PersistError::StoreLocked),
            Err(std::fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (events, valid_len) = scan(&bytes)?;
        if valid_len < bytes.len() {
            log::warn!(
                "{}: truncating {} bytes of torn log tail",
                path.display(),
                bytes.len() - valid_len
            );
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }
        let store = replay(&events, None)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                next: events.len() as u64,
            },
            store,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads a log without locking or repairing it (torn tails are ignored).
pub fn read_log(path: &Path) -> Result<Vec<StoredEvent>, PersistError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(scan(&bytes)?.0)
}

/// Decodes complete records; returns them with the byte length of the valid prefix.
fn scan(bytes: &[u8]) -> Result<(Vec<StoredEvent>, usize), PersistError> {
    let mut events = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            // torn: no terminating newline
            break;
        };
        let raw = &bytes[offset..offset + nl];
        let is_last = offset + nl + 1 == bytes.len();
        let decoded = std::str::from_utf8(raw)
            .map_err(|_| PersistError::CorruptLog {
                line: line_no,
                reason: "invalid UTF-8".into(),
            })
            .and_then(|l| decode_line(l, line_no));
        match decoded {
            Ok(ev) => events.push(ev),
            Err(_) if is_last => break,
            Err(e) => return Err(e),
        }
        offset += nl + 1;
    }
    Ok((events, offset))
}

impl Journal for FileJournal {
    fn append(&mut self, event: &Event) -> Result<u64, PersistError> {
        let seq = self.next;
        let mut line = encode_line(seq, event);
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.next += 1;
        Ok(seq)
    }

    fn next_sequence(&self) -> u64 {
        self.next
    }
}

