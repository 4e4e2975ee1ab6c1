//! Cycle-stamped event log.
//!
//! A run appends one record per lifecycle transition, in the exact order
//! the engine processed them, and renders to CSV with a fixed header:
//!
//! ```text
//! cycle,event,fid,name,fpu,detail
//! ```
//!
//! The `fpu` column is empty for events that happen away from a unit. No
//! field ever contains a comma (function names are validated at parse
//! time, details are built from a fixed vocabulary), so the format needs
//! no quoting and two equal runs produce byte-identical files.

use std::fmt;
use thiserror::Error;

pub const TRACE_HEADER: &str = "cycle,event,fid,name,fpu,detail";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Decode,
    Ready,
    Enqueue,
    Dispatch,
    Yield,
    Sleep,
    Wake,
    Complete,
    Integrate,
}

impl TraceEvent {
    pub const ALL: [TraceEvent; 9] = [
        TraceEvent::Decode,
        TraceEvent::Ready,
        TraceEvent::Enqueue,
        TraceEvent::Dispatch,
        TraceEvent::Yield,
        TraceEvent::Sleep,
        TraceEvent::Wake,
        TraceEvent::Complete,
        TraceEvent::Integrate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Decode => "decode",
            TraceEvent::Ready => "ready",
            TraceEvent::Enqueue => "enqueue",
            TraceEvent::Dispatch => "dispatch",
            TraceEvent::Yield => "yield",
            TraceEvent::Sleep => "sleep",
            TraceEvent::Wake => "wake",
            TraceEvent::Complete => "complete",
            TraceEvent::Integrate => "integrate",
        }
    }

    pub fn parse(s: &str) -> Option<TraceEvent> {
        Self::ALL.iter().copied().find(|e| e.as_str() == s)
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub event: TraceEvent,
    pub fid: String,
    pub name: String,
    pub fpu: Option<usize>,
    pub detail: String,
}

impl TraceRecord {
    pub fn new(
        cycle: u64,
        event: TraceEvent,
        fid: impl Into<String>,
        name: impl Into<String>,
    ) -> TraceRecord {
        TraceRecord {
            cycle,
            event,
            fid: fid.into(),
            name: name.into(),
            fpu: None,
            detail: String::new(),
        }
    }

    pub fn on(mut self, fpu: usize) -> TraceRecord {
        self.fpu = Some(fpu);
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> TraceRecord {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(
            !record.fid.contains(',') && !record.name.contains(',') && !record.detail.contains(','),
            "comma would corrupt the CSV"
        );
        debug_assert!(
            self.records.last().is_none_or(|r| r.cycle <= record.cycle),
            "records must be appended in cycle order"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let fpu = r.fpu.map(|id| id.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.cycle, r.event, r.fid, r.name, fpu, r.detail
            ));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Trace, TraceError> {
        let malformed = |line: usize, message: &str| TraceError::Malformed {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == TRACE_HEADER => {}
            Some(_) => return Err(malformed(1, "missing trace header")),
            None => return Err(malformed(1, "empty trace")),
        }
        let mut trace = Trace::new();
        for (i, row) in lines {
            let line = i + 1;
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 6 {
                return Err(malformed(line, "expected 6 comma-separated fields"));
            }
            let cycle = fields[0]
                .parse::<u64>()
                .map_err(|_| malformed(line, "cycle is not an unsigned integer"))?;
            let event = TraceEvent::parse(fields[1])
                .ok_or_else(|| malformed(line, "unknown event name"))?;
            let fpu = if fields[4].is_empty() {
                None
            } else {
                Some(
                    fields[4]
                        .parse::<usize>()
                        .map_err(|_| malformed(line, "fpu is not an unsigned integer"))?,
                )
            };
            trace.push(TraceRecord {
                cycle,
                event,
                fid: fields[2].to_string(),
                name: fields[3].to_string(),
                fpu,
                detail: fields[5].to_string(),
            });
        }
        Ok(trace)
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a TraceRecord;
    type IntoIter = std::slice::Iter<'a, TraceRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
