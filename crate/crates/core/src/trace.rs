//! Versioned JSON-lines trace format.
//!
//! The first line is a header naming the schema and its version, then one
//! line per step or particle snapshot, and a final `end` line carrying the
//! terminal status. Readers refuse any other schema or version.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{ExecutionTrace, Snapshot, StepRecord, TerminalStatus};
use crate::world::{GroundTruthObject, WorldMap};

pub const SCHEMA: &str = "framemap-trace";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub task: String,
    pub seed: u64,
    pub mode: String,
    pub map: WorldMap,
    /// Ground truth as placed at the start of the run.
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step(StepRecord),
    Snapshot(Snapshot),
    End { status: TerminalStatus },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported trace schema '{schema}' version {version}")]
    UnsupportedVersion { schema: String, version: u64 },
    #[error("trace has no end line")]
    Unterminated,
}

/// Serializes a trace. Output is a pure function of the inputs.
pub fn write_trace(header: &TraceHeader, trace: &ExecutionTrace) -> String {
    let mut lines = vec![TraceLine::Header(header.clone())];
    let mut snaps = trace.snapshots.iter().peekable();
    for r in &trace.records {
        while let Some(s) = snaps.next_if(|s| s.timestep <= r.timestep) {
            lines.push(TraceLine::Snapshot(s.clone()));
        }
        lines.push(TraceLine::Step(r.clone()));
    }
    lines.extend(snaps.cloned().map(TraceLine::Snapshot));
    lines.push(TraceLine::End {
        status: trace.status.clone(),
    });
    let mut out = String::new();
    for line in &lines {
        out.push_str(&serde_json::to_string(line).expect("trace values are finite"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub status: TerminalStatus,
}

pub fn read_trace(text: &str) -> Result<ParsedTrace, TraceError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TraceError::Empty)?;
    // check the version before trusting the rest of the layout
    let probe: serde_json::Value = serde_json::from_str(first).map_err(|e| TraceError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    let schema = probe
        .get("schema")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if schema != SCHEMA || version != u64::from(VERSION) {
        return Err(TraceError::UnsupportedVersion { schema, version });
    }
    let header = match serde_json::from_value(probe) {
        Ok(TraceLine::Header(h)) => h,
        Ok(_) => {
            return Err(TraceError::Malformed {
                line: 1,
                message: "expected header".into(),
            })
        }
        Err(e) => {
            return Err(TraceError::Malformed {
                line: 1,
                message: e.to_string(),
            })
        }
    };
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut status = None;
    for (i, text) in lines {
        let malformed = |message: String| TraceError::Malformed { line: i + 1, message };
        if status.is_some() {
            return Err(malformed("content after end line".into()));
        }
        match serde_json::from_str(text).map_err(|e| malformed(e.to_string()))? {
            TraceLine::Header(_) => return Err(malformed("second header".into())),
            TraceLine::Step(r) => {
                if records
                    .last()
                    .is_some_and(|p: &StepRecord| p.timestep >= r.timestep)
                {
                    return Err(malformed("timesteps must increase".into()));
                }
                records.push(r);
            }
            TraceLine::Snapshot(s) => snapshots.push(s),
            TraceLine::End { status: s } => status = Some(s),
        }
    }
    Ok(ParsedTrace {
        header,
        records,
        snapshots,
        status: status.ok_or(TraceError::Unterminated)?,
    })
}
