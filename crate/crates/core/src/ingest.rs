//! Line-oriented interaction logs and in-asset ownership annotations.
//!
//! Log formats (UTF-8, tab-separated, one record per line; blank lines and
//! lines starting with `#` are skipped):
//!
//! ```text
//! commitlog  <iso8601>\t<actor>\t<path>\t<lines_changed>
//! reviewlog  <iso8601>\t<actor>\t<path>\t<verdict>
//! adminlog   <iso8601>\t<actor>\t<table_name>\t<tool_action>
//! ```
//!
//! Parsed events carry the path (or table name) as their asset id; the
//! engine resolves it against registered assets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Action, AnnotationKind, AssetId, AssetType, CandidateId, InteractionEvent, OwnershipAnnotation};
use crate::time::{parse_time, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("cannot read `{path}`: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("unknown log format `{0}` (expected commitlog, reviewlog or adminlog)")]
    UnknownFormatTag(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    CommitLog,
    ReviewLog,
    AdminLog,
}

impl LogFormat {
    pub const ALL: [LogFormat; 3] = [LogFormat::CommitLog, LogFormat::ReviewLog, LogFormat::AdminLog];

    pub fn tag(self) -> &'static str {
        match self {
            LogFormat::CommitLog => "commitlog",
            LogFormat::ReviewLog => "reviewlog",
            LogFormat::AdminLog => "adminlog",
        }
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LogFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LogFormat::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| IngestError::UnknownFormatTag(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub source: String,
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.source, self.line, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<InteractionEvent>,
    pub diagnostics: Vec<ParseDiagnostic>,
    /// Blank and comment lines.
    pub skipped_lines: usize,
    pub total_lines: usize,
}

/// Content-derived event id: hash of source, line number and line text.
pub fn event_id(source: &str, line_no: usize, line: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    h.update([0]);
    h.update(line_no.to_string().as_bytes());
    h.update([0]);
    h.update(line.as_bytes());
    let digest = h.finalize();
    format!("ev-{}", hex::encode(&digest[..16]))
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

/// One well-formed log line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub at: Timestamp,
    pub actor: CandidateId,
    pub target: String,
    pub action: Action,
    pub attributes: BTreeMap<String, String>,
}

/// Parses one record; `Err` carries the diagnostic reason.
pub fn parse_line(format: LogFormat, line: &str) -> Result<LogRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let at = parse_time(fields[0]).ok_or_else(|| format!("bad timestamp `{}`", fields[0]))?;
    if !valid_token(fields[1]) {
        return Err(format!("bad actor `{}`", fields[1]));
    }
    let target = fields[2].trim();
    if target.is_empty() {
        return Err("empty asset path".into());
    }
    let extra = fields[3].trim();
    let mut attributes = BTreeMap::new();
    let action = match format {
        LogFormat::CommitLog => {
            let n: u64 = extra
                .parse()
                .map_err(|_| format!("bad lines_changed `{extra}`"))?;
            attributes.insert("lines_changed".to_string(), n.to_string());
            Action::Modify
        }
        LogFormat::ReviewLog => {
            if extra.is_empty() {
                return Err("empty verdict".into());
            }
            attributes.insert("verdict".to_string(), extra.to_string());
            if extra.eq_ignore_ascii_case("comment") || extra.eq_ignore_ascii_case("commented") {
                Action::Comment
            } else {
                Action::Review
            }
        }
        LogFormat::AdminLog => {
            if extra.is_empty() {
                return Err("empty tool action".into());
            }
            attributes.insert("tool_action".to_string(), extra.to_string());
            Action::AdminAction
        }
    };
    Ok(LogRecord {
        at,
        actor: CandidateId::new(fields[1]),
        target: target.to_string(),
        action,
        attributes,
    })
}

/// Parses log text. Line numbers are 1-based; `source` names the file for
/// diagnostics and event ids.
pub fn parse_log_str(source: &str, format: LogFormat, content: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        out.total_lines += 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            out.skipped_lines += 1;
            continue;
        }
        match parse_line(format, line) {
            Ok(r) => out.events.push(InteractionEvent {
                event_id: event_id(source, line_no, line),
                actor_id: r.actor,
                asset_id: AssetId::new(r.target),
                action: r.action,
                at: r.at,
                attributes: r.attributes,
            }),
            Err(reason) => out.diagnostics.push(ParseDiagnostic {
                source: source.to_string(),
                line: line_no,
                reason,
            }),
        }
    }
    out
}

/// Reads and parses a log file; the file name is the event-id source.
pub fn parse_log_file(path: &Path, format_tag: &str) -> Result<ParsedLog, IngestError> {
    let format: LogFormat = format_tag.parse()?;
    let content = std::fs::read_to_string(path).map_err(|e| IngestError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(parse_log_str(&source_name(path), format, &content))
}

/// Stable source name for a log path: its file name.
pub fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Asset type implied by a path seen in a commit or review log.
pub fn infer_asset_type(path: &str, format: LogFormat) -> AssetType {
    if format == LogFormat::AdminLog {
        return AssetType::WarehouseTable;
    }
    const CONFIG_EXT: [&str; 8] = ["yaml", "yml", "toml", "json", "ini", "conf", "cfg", "properties"];
    let ext = Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if CONFIG_EXT.contains(&ext.as_str()) {
        AssetType::ConfigFile
    } else {
        AssetType::SourceFile
    }
}

static DIRECTIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:#|//|--)?\s*(OWNER|ONCALL):(.*)$").expect("valid regex")
});

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationScan {
    pub annotations: Vec<OwnershipAnnotation>,
    /// Directives that matched the keyword but not the grammar.
    pub quarantined: Vec<ParseDiagnostic>,
}

/// Finds `OWNER:` / `ONCALL:` directives (optionally after `#`, `//` or `--`)
/// naming exactly one candidate id.
pub fn extract_annotations(
    asset_id: &AssetId,
    payload: &str,
    observed_at: Timestamp,
) -> AnnotationScan {
    let mut scan = AnnotationScan::default();
    for (i, raw) in payload.lines().enumerate() {
        let Some(caps) = DIRECTIVE.captures(raw.strip_suffix('\r').unwrap_or(raw)) else {
            continue;
        };
        let kind = if &caps[1] == "OWNER" {
            AnnotationKind::OwnersDirective
        } else {
            AnnotationKind::OncallDirective
        };
        let tokens: Vec<&str> = caps[2].split_whitespace().collect();
        match tokens.as_slice() {
            [name] => scan.annotations.push(OwnershipAnnotation {
                asset_id: asset_id.clone(),
                named_candidate: CandidateId::new(*name),
                annotation_kind: kind,
                source_location: format!("line {}", i + 1),
                observed_at,
            }),
            _ => scan.quarantined.push(ParseDiagnostic {
                source: asset_id.to_string(),
                line: i + 1,
                reason: format!("{} directive must name exactly one candidate", &caps[1]),
            }),
        }
    }
    scan
}
