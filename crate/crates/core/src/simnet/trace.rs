use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Create,
    Send,
    Deliver,
    Drop,
    Insert,
    Buffer,
    Violation,
    Assert,
}

/// One line of a simulation trace. Events appear in the order they happened;
/// a `Deliver` always follows its `Send`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub agent: String,
    pub kind: EventKind,
    /// Hex digest of the block concerned, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

pub fn write_trace<W: Write>(mut w: W, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn trace_to_string(events: &[TraceEvent]) -> String {
    let mut out = Vec::new();
    write_trace(&mut out, events).expect("in-memory write");
    String::from_utf8(out).expect("json is utf-8")
}

/// Parses line-delimited events. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// The first position where two traces differ, if any.
pub fn first_difference(a: &[TraceEvent], b: &[TraceEvent]) -> Option<usize> {
    let n = a.len().min(b.len());
    (0..n)
        .find(|&i| a[i] != b[i])
        .or((a.len() != b.len()).then_some(n))
}
