//! Update/forward activity traces.
//!
//! Trace file: one event per line, tab-separated, fixed field order:
//!
//! ```text
//! kind  mid  parent_mid  uid  uname  t  text
//! ```
//!
//! `kind` is `update` or `forward`, `parent_mid` is `-` for updates, `t` is
//! decimal seconds and `text` is backslash-escaped.

mod forest;
mod synth;

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::escape::{escape, unescape};
use crate::time::Timestamp;

pub use forest::{build_forward_forest, extract_stats, ForestNode, ForwardForest, TraceStats};
pub use synth::synth_trace;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid model for synthesis: {0}")]
    InvalidModel(String),
    #[error("cannot synthesize over an empty topology")]
    EmptyTopology,
    #[error("invalid window: start {0} after end {1}")]
    InvalidWindow(Timestamp, Timestamp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    Update,
    Forward,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Update => "update",
            TraceKind::Forward => "forward",
        }
    }
}

impl std::str::FromStr for TraceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "update" => Ok(TraceKind::Update),
            "forward" => Ok(TraceKind::Forward),
            other => Err(format!("unknown kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: TraceKind,
    pub mid: String,
    /// Present iff `kind` is `Forward`.
    pub parent_mid: Option<String>,
    pub uid: String,
    pub uname: String,
    pub t: Timestamp,
    pub text: String,
}

impl TraceEvent {
    pub fn update(mid: &str, uid: &str, uname: &str, t: Timestamp, text: &str) -> Self {
        TraceEvent {
            kind: TraceKind::Update,
            mid: mid.into(),
            parent_mid: None,
            uid: uid.into(),
            uname: uname.into(),
            t,
            text: text.into(),
        }
    }

    pub fn forward(mid: &str, parent: &str, uid: &str, uname: &str, t: Timestamp, text: &str) -> Self {
        TraceEvent {
            kind: TraceKind::Forward,
            mid: mid.into(),
            parent_mid: Some(parent.into()),
            uid: uid.into(),
            uname: uname.into(),
            t,
            text: text.into(),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.kind.as_str(),
            self.mid,
            self.parent_mid.as_deref().unwrap_or("-"),
            self.uid,
            self.uname,
            self.t,
            escape(&self.text)
        )
    }
}

/// Non-fatal problems found while cleaning a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceWarning {
    DanglingParent { mid: String, parent: String },
    DuplicateMid { mid: String },
    TimeReversal { mid: String, parent: String },
    UnknownUser { mid: String, uid: String },
    RepeatedForward { mid: String, uid: String, parent: String },
}

impl std::fmt::Display for TraceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceWarning::DanglingParent { mid, parent } => write!(f, "{mid}: dropped, parent {parent} not in trace"),
            TraceWarning::DuplicateMid { mid } => write!(f, "{mid}: duplicate mid dropped"),
            TraceWarning::TimeReversal { mid, parent } => write!(f, "{mid}: earlier than parent {parent}, dropped"),
            TraceWarning::UnknownUser { mid, uid } => write!(f, "{mid}: user {uid} not in topology, dropped"),
            TraceWarning::RepeatedForward { mid, uid, parent } => {
                write!(f, "{mid}: {uid} already forwards {parent}, dropped")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTrace {
    pub events: Vec<TraceEvent>,
    pub warnings: Vec<TraceWarning>,
}

fn parse_line(line: &str, line_no: usize) -> Result<TraceEvent, TraceError> {
    let bad = |reason: String| TraceError::Malformed { line: line_no, reason };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return Err(bad(format!("expected 7 tab-separated fields, got {}", fields.len())));
    }
    let kind: TraceKind = fields[0].parse().map_err(bad)?;
    let parent_mid = match (kind, fields[2]) {
        (TraceKind::Update, "-") => None,
        (TraceKind::Update, p) => return Err(bad(format!("update with parent {p:?}"))),
        (TraceKind::Forward, "-") | (TraceKind::Forward, "") => return Err(bad("forward without parent".into())),
        (TraceKind::Forward, p) => Some(p.to_string()),
    };
    if fields[1].is_empty() || fields[3].is_empty() {
        return Err(bad("empty mid or uid".into()));
    }
    let t: Timestamp = fields[5].parse().map_err(|e: crate::time::TimeError| bad(e.to_string()))?;
    let text = unescape(fields[6]).ok_or_else(|| bad("bad escape in text".into()))?;
    Ok(TraceEvent {
        kind,
        mid: fields[1].to_string(),
        parent_mid,
        uid: fields[3].to_string(),
        uname: fields[4].to_string(),
        t,
        text,
    })
}

/// Parses a trace. Malformed lines are fatal; forwards whose ancestry does
/// not lead back to an update in the file are dropped with a warning.
pub fn parse_trace<'a, I>(lines: I) -> Result<ParsedTrace, TraceError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut events = Vec::new();
    for (n, line) in lines.into_iter().enumerate() {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        events.push(parse_line(line, n + 1)?);
    }
    let mut warnings = Vec::new();
    // resolve transitively: a forward survives only if its parent survives
    let mut alive: HashSet<String> = HashSet::new();
    let mut kept = vec![false; events.len()];
    let mut seen_mid = HashSet::new();
    for (i, e) in events.iter().enumerate() {
        if !seen_mid.insert(e.mid.clone()) {
            warnings.push(TraceWarning::DuplicateMid { mid: e.mid.clone() });
            continue;
        }
        if e.kind == TraceKind::Update {
            kept[i] = true;
            alive.insert(e.mid.clone());
        }
    }
    loop {
        let mut changed = false;
        for (i, e) in events.iter().enumerate() {
            if kept[i] || e.kind != TraceKind::Forward {
                continue;
            }
            if alive.contains(e.mid.as_str()) {
                continue; // a duplicate of a kept mid
            }
            if alive.contains(e.parent_mid.as_deref().unwrap_or_default()) {
                kept[i] = true;
                alive.insert(e.mid.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut dup_reported: HashSet<&str> = HashSet::new();
    for (i, e) in events.iter().enumerate() {
        if !kept[i] && e.kind == TraceKind::Forward && !alive.contains(e.mid.as_str()) {
            let parent = e.parent_mid.clone().unwrap_or_default();
            log::warn!("trace: forward {} references unknown parent {}", e.mid, parent);
            warnings.push(TraceWarning::DanglingParent { mid: e.mid.clone(), parent });
        } else if !kept[i] && !dup_reported.insert(e.mid.as_str()) {
            // already reported as a duplicate
        }
    }
    let events = events.into_iter().zip(kept).filter_map(|(e, k)| k.then_some(e)).collect();
    Ok(ParsedTrace { events, warnings })
}

pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 64);
    for e in events {
        let _ = writeln!(out, "{}", e.to_line());
    }
    out
}

/// Keeps updates with `t` in `[t0, t1]` and every forward descending from a
/// kept update, wherever it falls in time.
pub fn filter_window(events: &[TraceEvent], t0: Timestamp, t1: Timestamp) -> Result<Vec<TraceEvent>, TraceError> {
    if t0 > t1 {
        return Err(TraceError::InvalidWindow(t0, t1));
    }
    let mut keep: HashSet<&str> = events
        .iter()
        .filter(|e| e.kind == TraceKind::Update && e.t >= t0 && e.t <= t1)
        .map(|e| e.mid.as_str())
        .collect();
    loop {
        let before = keep.len();
        for e in events.iter().filter(|e| e.kind == TraceKind::Forward) {
            if keep.contains(e.parent_mid.as_deref().unwrap_or_default()) {
                keep.insert(e.mid.as_str());
            }
        }
        if keep.len() == before {
            break;
        }
    }
    Ok(events.iter().filter(|e| keep.contains(e.mid.as_str())).cloned().collect())
}
