//! JSON-lines replay files: requests made of queries and their result rows.
//!
//! ```text
//! {"kind": "header", "format_version": 1, "policy": "calendar_policy.json", "ctx": {"MyUId": 1}}
//! {"kind": "query", "sql": "SELECT * FROM Users WHERE UId = ?", "params": [1], "rows": [[1, "John Doe"]]}
//! {"kind": "end_request"}
//! {"kind": "begin_request", "ctx": {"MyUId": 8}}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value as Json;

use crate::value::Value;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayQuery {
    pub sql: String,
    pub params: Vec<Value>,
    pub rows: Vec<Vec<Value>>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayRequest {
    pub ctx: BTreeMap<String, Value>,
    pub queries: Vec<ReplayQuery>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    /// Policy path from the header, resolved against the replay's directory.
    pub policy: Option<PathBuf>,
    pub requests: Vec<ReplayRequest>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Header {
        format_version: u64,
        #[serde(default)]
        policy: Option<String>,
        #[serde(default)]
        ctx: BTreeMap<String, Json>,
    },
    Query {
        sql: String,
        #[serde(default)]
        params: Vec<Json>,
        #[serde(default)]
        rows: Vec<Vec<Json>>,
    },
    BeginRequest {
        #[serde(default)]
        ctx: BTreeMap<String, Json>,
    },
    EndRequest {},
}

fn value(j: &Json, line: usize) -> Result<Value, ReplayError> {
    Value::from_json(j).ok_or_else(|| ReplayError::Format { line, message: format!("unsupported value {j}") })
}

fn context(raw: &BTreeMap<String, Json>, line: usize) -> Result<BTreeMap<String, Value>, ReplayError> {
    raw.iter().map(|(k, v)| Ok((k.clone(), value(v, line)?))).collect()
}

pub fn parse_replay(text: &str, base: Option<&Path>) -> Result<Replay, ReplayError> {
    let mut policy = None;
    let mut requests = Vec::new();
    let mut current: Option<ReplayRequest> = None;
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(raw).map_err(|e| ReplayError::Format { line, message: e.to_string() })?;
        if !header_seen && !matches!(parsed, Line::Header { .. }) {
            return Err(ReplayError::Format { line, message: "first line must be a header".into() });
        }
        match parsed {
            Line::Header { format_version, policy: p, ctx } => {
                if header_seen {
                    return Err(ReplayError::Format { line, message: "duplicate header".into() });
                }
                if format_version != FORMAT_VERSION {
                    return Err(ReplayError::Format { line, message: format!("unsupported format_version {format_version}") });
                }
                header_seen = true;
                policy = p.map(|p| base.map(|b| b.join(&p)).unwrap_or_else(|| PathBuf::from(p)));
                current = Some(ReplayRequest { ctx: context(&ctx, line)?, queries: Vec::new() });
            }
            Line::Query { sql, params, rows } => {
                let params = params.iter().map(|p| value(p, line)).collect::<Result<_, _>>()?;
                let rows = rows
                    .iter()
                    .map(|r| r.iter().map(|v| value(v, line)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<_, _>>()?;
                let req = current
                    .as_mut()
                    .ok_or_else(|| ReplayError::Format { line, message: "query outside a request".into() })?;
                req.queries.push(ReplayQuery { sql, params, rows, line });
            }
            Line::BeginRequest { ctx } => {
                if let Some(r) = current.take() {
                    requests.push(r);
                }
                current = Some(ReplayRequest { ctx: context(&ctx, line)?, queries: Vec::new() });
            }
            Line::EndRequest {} => {
                let r = current
                    .take()
                    .ok_or_else(|| ReplayError::Format { line, message: "end_request outside a request".into() })?;
                requests.push(r);
            }
        }
    }
    if !header_seen {
        return Ok(Replay { policy: None, requests: Vec::new() });
    }
    if let Some(r) = current {
        if !r.queries.is_empty() {
            requests.push(r);
        }
    }
    Ok(Replay { policy, requests })
}

pub fn load_replay(path: &Path) -> Result<Replay, ReplayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ReplayError::Io { path: path.display().to_string(), source })?;
    parse_replay(&text, path.parent())
}
