//! Run statistics and their serializable report form.
//!
//! Statistics come from two places that must agree: the engine counts
//! while it runs, and [`compute_stats`] recovers the same numbers from a
//! finished trace alone. The second path exists so traces stay honest; a
//! trace that cannot reproduce its own report is a bug.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Mode, SimulationConfig};
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionStats {
    pub fid: String,
    /// Cycles between first joining the queue and first reaching a unit.
    pub wait: u64,
    /// Cycles between first joining the queue and being committed.
    pub turnaround: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Cycle at which the last function committed; 0 for an empty program.
    pub makespan: u64,
    /// Functions committed per cycle of makespan.
    pub throughput: f64,
    /// Executed-cycle fraction of the makespan, per unit in id order. A
    /// fetch run reports its single sequential unit.
    pub per_fpu_utilization: Vec<f64>,
    /// Per function, in program order.
    pub per_function: Vec<FunctionStats>,
    pub decoded: u64,
    pub dispatched: u64,
    pub completed: u64,
    pub integrated: u64,
}

/// The JSON document `run --report` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub makespan: u64,
    pub throughput: f64,
    pub per_fpu_utilization: Vec<f64>,
    pub per_function: Vec<FunctionStats>,
    pub mode: String,
}

impl Report {
    pub fn new(stats: &RunStats, mode: Mode) -> Report {
        Report {
            makespan: stats.makespan,
            throughput: stats.throughput,
            per_fpu_utilization: stats.per_fpu_utilization.clone(),
            per_function: stats.per_function.clone(),
            mode: mode.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The JSON document the compare command writes: one report per feed
/// model plus the fetch-to-push makespan ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub mode: String,
    pub push: Report,
    pub fetch: Report,
    pub ratio: f64,
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<CompareReport, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("trace is incomplete: {0}")]
    Incomplete(String),
    #[error("trace is inconsistent: {0}")]
    Inconsistent(String),
}

struct Entry {
    name: String,
    first_enqueue: Option<u64>,
    first_dispatch: Option<u64>,
    completed: Option<u64>,
    integrated: Option<u64>,
}

fn known<'a>(
    entries: &'a mut HashMap<String, Entry>,
    fid: &str,
) -> Result<&'a mut Entry, StatsError> {
    entries
        .get_mut(fid)
        .ok_or_else(|| StatsError::Inconsistent(format!("{fid} acted before decode")))
}

/// Recompute run statistics from a trace.
///
/// `mode` decides how many units the utilization vector covers: the
/// configured farm for a push run, the single sequential unit for fetch.
pub fn compute_stats(
    trace: &Trace,
    config: &SimulationConfig,
    mode: Mode,
) -> Result<RunStats, StatsError> {
    let unit_count = match mode {
        Mode::Fetch => 1,
        _ => config.total_fpus() as usize,
    };
    let mut order: Vec<String> = Vec::new();
    let mut entries: HashMap<String, Entry> = HashMap::new();
    let mut busy = vec![0u64; unit_count];
    // Open execution stint per fid: (start cycle, unit, lookup latency).
    let mut open: HashMap<String, (u64, usize, u64)> = HashMap::new();

    for r in trace {
        let fid = r.fid.as_str();
        match r.event {
            TraceEvent::Decode => {
                if entries.contains_key(fid) {
                    return Err(StatsError::Inconsistent(format!("{fid} decoded twice")));
                }
                order.push(fid.to_string());
                entries.insert(
                    fid.to_string(),
                    Entry {
                        name: r.name.clone(),
                        first_enqueue: None,
                        first_dispatch: None,
                        completed: None,
                        integrated: None,
                    },
                );
            }
            TraceEvent::Ready | TraceEvent::Wake => {}
            TraceEvent::Enqueue => {
                let e = known(&mut entries, fid)?;
                e.first_enqueue.get_or_insert(r.cycle);
            }
            TraceEvent::Dispatch => {
                let unit = r
                    .fpu
                    .ok_or_else(|| StatsError::Inconsistent(format!("{fid} dispatched nowhere")))?;
                if unit >= unit_count {
                    return Err(StatsError::Inconsistent(format!(
                        "{fid} dispatched to unknown unit {unit}"
                    )));
                }
                let latency = dispatch_latency(&r.detail).ok_or_else(|| {
                    StatsError::Inconsistent(format!("{fid} dispatch detail `{}`", r.detail))
                })?;
                let e = known(&mut entries, fid)?;
                e.first_dispatch.get_or_insert(r.cycle);
                if open
                    .insert(fid.to_string(), (r.cycle, unit, latency))
                    .is_some()
                {
                    return Err(StatsError::Inconsistent(format!(
                        "{fid} dispatched while already running"
                    )));
                }
            }
            TraceEvent::Yield | TraceEvent::Sleep | TraceEvent::Complete => {
                let (start, unit, latency) = open.remove(fid).ok_or_else(|| {
                    StatsError::Inconsistent(format!("{fid} stopped without dispatch"))
                })?;
                let executed = r
                    .cycle
                    .checked_sub(start + latency)
                    .ok_or_else(|| StatsError::Inconsistent(format!("{fid} ran backwards")))?;
                busy[unit] += executed;
                if r.event == TraceEvent::Complete {
                    known(&mut entries, fid)?.completed = Some(r.cycle);
                }
            }
            TraceEvent::Integrate => {
                known(&mut entries, fid)?.integrated = Some(r.cycle);
            }
        }
    }

    if let Some(fid) = open.keys().next() {
        return Err(StatsError::Incomplete(format!("{fid} still running")));
    }

    let mut makespan = 0u64;
    let mut per_function = Vec::with_capacity(order.len());
    for fid in &order {
        let e = &entries[fid];
        let missing =
            |what: &str| StatsError::Incomplete(format!("{fid} (`{}`) never {what}", e.name));
        let enq = e.first_enqueue.ok_or_else(|| missing("enqueued"))?;
        let disp = e.first_dispatch.ok_or_else(|| missing("dispatched"))?;
        e.completed.ok_or_else(|| missing("completed"))?;
        let integ = e.integrated.ok_or_else(|| missing("integrated"))?;
        makespan = makespan.max(integ);
        per_function.push(FunctionStats {
            fid: fid.clone(),
            wait: disp - enq,
            turnaround: integ - enq,
        });
    }

    let n = order.len() as u64;
    let throughput = if makespan == 0 {
        0.0
    } else {
        n as f64 / makespan as f64
    };
    let per_fpu_utilization = busy
        .iter()
        .map(|&b| {
            if makespan == 0 {
                0.0
            } else {
                b as f64 / makespan as f64
            }
        })
        .collect();
    Ok(RunStats {
        makespan,
        throughput,
        per_fpu_utilization,
        per_function,
        decoded: n,
        dispatched: n,
        completed: n,
        integrated: n,
    })
}

/// Pull the lookup latency out of a dispatch detail such as `hit:1`,
/// `miss:7` or `fetch:2`.
fn dispatch_latency(detail: &str) -> Option<u64> {
    let (tag, value) = detail.split_once(':')?;
    if !matches!(tag, "hit" | "miss" | "fetch") {
        return None;
    }
    value.parse().ok()
}
