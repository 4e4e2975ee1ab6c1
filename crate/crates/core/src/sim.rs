//! The discrete-event engine tying decode, queueing, execution and
//! integration together.
//!
//! Within one cycle, work settles in a fixed stage order:
//!
//! 1. decode emissions,
//! 2. completions of running functions,
//! 3. wakes of expired sleepers,
//! 4. scripted yields,
//! 5. freshly ready functions joining the queue,
//! 6. a single dispatch scan over everything above.
//!
//! Ties inside a stage break by program index, then by scheduling order.
//! Every decision therefore depends only on the program and the
//! configuration, never on hash order or wall-clock anything, which is
//! what makes two runs of the same input byte-identical.
//!
//! The scan runs at most once per cycle, after the cycle's bookkeeping.
//! A unit freed by a completion can be rearmed in that same cycle, and a
//! function whose last dependency completes in cycle t can be dispatched
//! in cycle t.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::config::SimulationConfig;
use crate::farm::{ExecutionPlan, FpUnit, Interconnect, LocalStore};
use crate::funpiler::{decode, DecodeError, FidAllocator, FunctionInstance, LifecycleState};
use crate::program::{FunctionKind, ProgramGraph};
use crate::scheduler::MultilevelPriorityQueue;
use crate::stats::{FunctionStats, RunStats};
use crate::trace::{Trace, TraceEvent, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no execution unit for {0} functions")]
    NoFpuForKind(FunctionKind),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("stalled at cycle {cycle}: {waiting} function(s) can never finish")]
    Deadlock { cycle: u64, waiting: usize },
}

/// A finished run: the numbers and the full event log behind them.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub stats: RunStats,
    pub trace: Trace,
}

/// Push and fetch runs of the same program, side by side.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub push: SimOutcome,
    pub fetch: SimOutcome,
    /// Fetch makespan over push makespan; 1.0 for an empty program.
    pub ratio: f64,
}

/// Re-sequencing buffer: completions arrive in any order, commits leave
/// strictly in program order.
#[derive(Debug, Clone)]
pub struct IntegrationBuffer {
    offered: Vec<bool>,
    next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("function already offered for integration")]
pub struct DoubleCommit;

impl IntegrationBuffer {
    pub fn new(len: usize) -> IntegrationBuffer {
        IntegrationBuffer {
            offered: vec![false; len],
            next: 0,
        }
    }

    /// Next program index awaiting commit.
    pub fn next_commit_index(&self) -> usize {
        self.next
    }

    pub fn is_complete(&self) -> bool {
        self.next == self.offered.len()
    }

    /// Hand over a completed function. Returns the program indices that
    /// commit as a result: nothing while an earlier function is still
    /// outstanding, a whole run of held entries once the gap closes.
    pub fn offer(&mut self, program_index: usize) -> Result<Vec<usize>, DoubleCommit> {
        if self.offered[program_index] {
            return Err(DoubleCommit);
        }
        self.offered[program_index] = true;
        let mut committed = Vec::new();
        while self.next < self.offered.len() && self.offered[self.next] {
            committed.push(self.next);
            self.next += 1;
        }
        Ok(committed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("function has no device wait to sleep on")]
pub struct NoIoWait;

/// Park a function on its device wait right after its compute phase.
///
/// Marks the one allowed sleep as used and leaves a single cycle of
/// completion work for after the wake. Returns the wake cycle.
pub fn handle_sleep(inst: &mut FunctionInstance, now: u64) -> Result<u64, NoIoWait> {
    if inst.spec.io_wait == 0 || inst.slept {
        return Err(NoIoWait);
    }
    inst.set_state(LifecycleState::Sleeping);
    inst.slept = true;
    inst.remaining_cost = 1;
    Ok(now + inst.spec.io_wait)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    DecodeEmit,
    Completion,
    Wake,
    YieldPoint,
    BecameReady,
    DispatchScan,
}

impl EventKind {
    fn stage(self) -> u8 {
        match self {
            EventKind::DecodeEmit => 0,
            EventKind::Completion => 1,
            EventKind::Wake => 2,
            EventKind::YieldPoint => 3,
            EventKind::BecameReady => 4,
            EventKind::DispatchScan => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    at: u64,
    kind: EventKind,
    /// Program index of the affected function, or the batch number for
    /// decode emissions; ties within a stage resolve on this.
    subject: usize,
    seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.kind.stage(), self.subject, self.seq).cmp(&(
            other.at,
            other.kind.stage(),
            other.subject,
            other.seq,
        ))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Run a program through the decoded, push-fed machine.
pub fn run(graph: &ProgramGraph, config: &SimulationConfig) -> Result<SimOutcome, SimError> {
    assert!(
        config.decode_width >= 1 && config.priority_levels >= 2,
        "invalid machine"
    );
    if config.strict_kinds {
        for spec in graph.nodes() {
            if config.fpu_count(spec.kind) == 0 {
                return Err(SimError::NoFpuForKind(spec.kind));
            }
        }
    }
    let instances = decode(graph, config.decode_width, config.priority_levels)?;
    Engine::new(graph, config, instances).drive()
}

/// Run the sequential fetch-style reference machine over the same
/// program: one function at a time, each paying the fetch latency before
/// its cost, dependencies trivially satisfied by the ordering.
pub fn run_fetch_baseline(graph: &ProgramGraph, config: &SimulationConfig) -> SimOutcome {
    let fetch = config.fetch_latency;
    let mut alloc = FidAllocator::new();
    let mut trace = Trace::new();
    let mut per_function = Vec::with_capacity(graph.len());
    let mut start = 0u64;
    let mut executed = 0u64;
    for (i, spec) in graph.nodes().iter().enumerate() {
        let fid = alloc.assign(spec.kind).to_string();
        let done = start.saturating_add(fetch).saturating_add(spec.cost);
        let row = |event, at: u64| TraceRecord::new(at, event, &fid, &spec.name);
        trace.push(row(TraceEvent::Decode, start).with_detail(spec.kind.token()));
        trace.push(row(TraceEvent::Ready, start));
        trace.push(row(TraceEvent::Enqueue, start));
        trace.push(
            row(TraceEvent::Dispatch, start)
                .on(0)
                .with_detail(format!("fetch:{fetch}")),
        );
        trace.push(row(TraceEvent::Complete, done).on(0));
        trace.push(row(TraceEvent::Integrate, done).with_detail(format!("index:{i}")));
        per_function.push(FunctionStats {
            fid,
            wait: 0,
            turnaround: done - start,
        });
        executed = executed.saturating_add(spec.cost);
        start = done;
    }
    let makespan = start;
    let n = graph.len() as u64;
    let ratio = |num: u64| {
        if makespan == 0 {
            0.0
        } else {
            num as f64 / makespan as f64
        }
    };
    SimOutcome {
        stats: RunStats {
            makespan,
            throughput: ratio(n),
            per_fpu_utilization: vec![ratio(executed)],
            per_function,
            decoded: n,
            dispatched: n,
            completed: n,
            integrated: n,
        },
        trace,
    }
}

/// Run both feed models and relate their makespans.
pub fn run_compare(
    graph: &ProgramGraph,
    config: &SimulationConfig,
) -> Result<CompareOutcome, SimError> {
    let push = run(graph, config)?;
    let fetch = run_fetch_baseline(graph, config);
    let ratio = if push.stats.makespan == 0 {
        1.0
    } else {
        fetch.stats.makespan as f64 / push.stats.makespan as f64
    };
    Ok(CompareOutcome { push, fetch, ratio })
}

struct Engine<'a> {
    graph: &'a ProgramGraph,
    config: &'a SimulationConfig,
    bus: Interconnect,
    instances: Vec<FunctionInstance>,
    queue: MultilevelPriorityQueue,
    fpus: Vec<FpUnit>,
    /// Unit currently executing each instance.
    running_on: Vec<Option<usize>>,
    /// Plan the unit accepted for the current stint of each instance.
    plans: Vec<Option<ExecutionPlan>>,
    integration: IntegrationBuffer,
    events: BinaryHeap<Reverse<Event>>,
    event_seq: u64,
    /// Cycle with a pending dispatch scan, if any; keeps the scan single.
    scan_scheduled_for: Option<u64>,
    ready_scheduled: Vec<bool>,
    trace: Trace,
    integrated: usize,
    now: u64,
}

impl<'a> Engine<'a> {
    fn new(
        graph: &'a ProgramGraph,
        config: &'a SimulationConfig,
        instances: Vec<FunctionInstance>,
    ) -> Engine<'a> {
        let n = instances.len();
        let mut engine = Engine {
            graph,
            config,
            bus: config.interconnect(),
            instances,
            queue: MultilevelPriorityQueue::new(config.priority_levels),
            fpus: build_farm(graph, config),
            running_on: vec![None; n],
            plans: vec![None; n],
            integration: IntegrationBuffer::new(n),
            events: BinaryHeap::new(),
            event_seq: 0,
            scan_scheduled_for: None,
            ready_scheduled: vec![false; n],
            trace: Trace::new(),
            integrated: 0,
            now: 0,
        };
        if n > 0 {
            let last_batch = (n as u64 - 1) / config.decode_width;
            for batch in 0..=last_batch {
                engine.push_event(batch, EventKind::DecodeEmit, batch as usize);
            }
        }
        engine
    }

    fn drive(mut self) -> Result<SimOutcome, SimError> {
        let n = self.instances.len();
        while let Some(Reverse(ev)) = self.events.pop() {
            debug_assert!(ev.at >= self.now, "event queue went backwards");
            self.now = ev.at;
            match ev.kind {
                EventKind::DecodeEmit => self.on_decode_batch(ev.at, ev.subject),
                EventKind::Completion => self.on_run_end(ev.at, ev.subject, false),
                EventKind::YieldPoint => self.on_run_end(ev.at, ev.subject, true),
                EventKind::Wake => self.on_wake(ev.at, ev.subject),
                EventKind::BecameReady => self.on_ready(ev.at, ev.subject),
                EventKind::DispatchScan => self.on_scan(ev.at),
            }
            if self.integrated == n {
                break;
            }
        }
        if self.integrated < n {
            return Err(SimError::Deadlock {
                cycle: self.now,
                waiting: n - self.integrated,
            });
        }
        Ok(self.finish())
    }

    fn on_decode_batch(&mut self, at: u64, batch: usize) {
        let width = self.config.decode_width as usize;
        let lo = batch * width;
        let hi = (lo + width).min(self.instances.len());
        for i in lo..hi {
            debug_assert_eq!(self.instances[i].decode_time, at);
            self.trace.push(
                self.row(at, TraceEvent::Decode, i)
                    .with_detail(self.instances[i].kind().token()),
            );
            if self.deps_completed(i) {
                self.schedule_ready(at, i);
            }
        }
    }

    fn on_ready(&mut self, at: u64, idx: usize) {
        self.instances[idx].set_state(LifecycleState::Ready);
        self.trace.push(self.row(at, TraceEvent::Ready, idx));
        let seq = self
            .queue
            .enqueue(&mut self.instances, idx, at)
            .expect("fresh enqueue cannot fail");
        let level = self.instances[idx].priority.level;
        self.trace.push(
            self.row(at, TraceEvent::Enqueue, idx)
                .with_detail(format!("level:{level} seq:{seq}")),
        );
        self.request_scan(at);
    }

    fn on_wake(&mut self, at: u64, idx: usize) {
        let seq = self
            .queue
            .requeue_on_wake(&mut self.instances, idx, at)
            .expect("wake of a non-sleeper");
        let level = self.instances[idx].priority.level;
        self.trace.push(
            self.row(at, TraceEvent::Wake, idx)
                .with_detail(format!("level:{level} seq:{seq}")),
        );
        self.request_scan(at);
    }

    fn on_run_end(&mut self, at: u64, idx: usize, is_yield: bool) {
        let fpu_id = self.running_on[idx].take().expect("run end without a unit");
        let plan = self.plans[idx].take().expect("run end without a plan");
        debug_assert_eq!(plan.ends_at, at);
        debug_assert_eq!(plan.ends_with_yield, is_yield);
        self.fpus[fpu_id].release(plan.service_cycles);

        if is_yield {
            let inst = &mut self.instances[idx];
            inst.remaining_cost -= plan.service_cycles;
            inst.yielded = true;
            let seq = self
                .queue
                .yield_requeue(&mut self.instances, idx, at)
                .expect("yield requeue");
            let inst = &self.instances[idx];
            let detail = format!(
                "level:{} seq:{} remaining:{}",
                inst.priority.level, seq, inst.remaining_cost
            );
            self.trace.push(
                self.row(at, TraceEvent::Yield, idx)
                    .on(fpu_id)
                    .with_detail(detail),
            );
            self.request_scan(at);
            return;
        }

        let needs_sleep = self.instances[idx].spec.io_wait > 0 && !self.instances[idx].slept;
        if needs_sleep {
            let wake_at = handle_sleep(&mut self.instances[idx], at).expect("sleep precondition");
            self.trace.push(
                self.row(at, TraceEvent::Sleep, idx)
                    .on(fpu_id)
                    .with_detail(format!("wake_at:{wake_at}")),
            );
            self.push_event(wake_at, EventKind::Wake, idx);
        } else {
            {
                let inst = &mut self.instances[idx];
                inst.set_state(LifecycleState::Completed);
                inst.completed_at = Some(at);
                inst.remaining_cost = 0;
            }
            self.trace
                .push(self.row(at, TraceEvent::Complete, idx).on(fpu_id));
            let committed = self
                .integration
                .offer(idx)
                .expect("completed function offered twice");
            for ci in committed {
                let inst = &mut self.instances[ci];
                inst.set_state(LifecycleState::Integrated);
                inst.integrated_at = Some(at);
                self.integrated += 1;
                self.trace.push(
                    self.row(at, TraceEvent::Integrate, ci)
                        .with_detail(format!("index:{ci}")),
                );
            }
            for &s in self.graph.succs(idx) {
                if self.instances[s].decode_time <= at
                    && self.instances[s].state == LifecycleState::Decoded
                    && !self.ready_scheduled[s]
                    && self.deps_completed(s)
                {
                    self.schedule_ready(at, s);
                }
            }
        }
        self.request_scan(at);
    }

    fn on_scan(&mut self, at: u64) {
        debug_assert_eq!(self.scan_scheduled_for, Some(at));
        self.scan_scheduled_for = None;
        let free: Vec<(usize, FunctionKind)> = self
            .fpus
            .iter()
            .filter(|f| f.is_idle())
            .map(|f| (f.id, f.kind))
            .collect();
        if free.is_empty() {
            return;
        }
        for (idx, fpu_id) in self.queue.dispatch(&mut self.instances, &free, at) {
            let plan = self.fpus[fpu_id]
                .begin_execution(&mut self.instances[idx], idx, at, &self.bus)
                .expect("scan matched an unusable unit");
            self.running_on[idx] = Some(fpu_id);
            let end = if plan.ends_with_yield {
                EventKind::YieldPoint
            } else {
                EventKind::Completion
            };
            self.push_event(plan.ends_at, end, idx);
            let detail = format!(
                "{}:{}",
                if plan.hit { "hit" } else { "miss" },
                plan.lookup_latency
            );
            self.trace.push(
                self.row(at, TraceEvent::Dispatch, idx)
                    .on(fpu_id)
                    .with_detail(detail),
            );
            self.plans[idx] = Some(plan);
        }
    }

    fn deps_completed(&self, i: usize) -> bool {
        self.graph.preds(i).iter().all(|&p| {
            matches!(
                self.instances[p].state,
                LifecycleState::Completed | LifecycleState::Integrated
            )
        })
    }

    fn schedule_ready(&mut self, at: u64, i: usize) {
        debug_assert!(!self.ready_scheduled[i], "function readied twice");
        self.ready_scheduled[i] = true;
        self.push_event(at, EventKind::BecameReady, i);
    }

    fn request_scan(&mut self, at: u64) {
        if self.scan_scheduled_for != Some(at) {
            debug_assert!(self.scan_scheduled_for.is_none(), "stale scan request");
            self.scan_scheduled_for = Some(at);
            self.push_event(at, EventKind::DispatchScan, 0);
        }
    }

    fn push_event(&mut self, at: u64, kind: EventKind, subject: usize) {
        let seq = self.event_seq;
        self.event_seq += 1;
        self.events.push(Reverse(Event {
            at,
            kind,
            subject,
            seq,
        }));
    }

    fn row(&self, at: u64, event: TraceEvent, idx: usize) -> TraceRecord {
        let inst = &self.instances[idx];
        TraceRecord::new(at, event, inst.fid.to_string(), inst.spec.name.clone())
    }

    fn finish(self) -> SimOutcome {
        let makespan = self
            .instances
            .iter()
            .filter_map(|i| i.integrated_at)
            .max()
            .unwrap_or(0);
        let n = self.instances.len();
        let throughput = if makespan == 0 {
            0.0
        } else {
            n as f64 / makespan as f64
        };
        let per_function = self
            .instances
            .iter()
            .map(|i| FunctionStats {
                fid: i.fid.to_string(),
                wait: i.first_dispatched_at.unwrap() - i.first_enqueued_at.unwrap(),
                turnaround: i.integrated_at.unwrap() - i.first_enqueued_at.unwrap(),
            })
            .collect();
        SimOutcome {
            stats: RunStats {
                makespan,
                throughput,
                per_fpu_utilization: self.fpus.iter().map(|f| f.utilization(makespan)).collect(),
                per_function,
                decoded: n as u64,
                dispatched: self
                    .instances
                    .iter()
                    .filter(|i| i.first_dispatched_at.is_some())
                    .count() as u64,
                completed: self
                    .instances
                    .iter()
                    .filter(|i| i.completed_at.is_some())
                    .count() as u64,
                integrated: self.integrated as u64,
            },
            trace: self.trace,
        }
    }
}

/// One unit per configured slot, ids in configuration order, each local
/// store warmed with the earliest-declared functions of its kind.
fn build_farm(graph: &ProgramGraph, config: &SimulationConfig) -> Vec<FpUnit> {
    let mut fpus = Vec::with_capacity(config.total_fpus() as usize);
    for &(kind, count) in &config.fpus {
        for _ in 0..count {
            let mut store = LocalStore::new(config.local_store_capacity, config.hit_latency);
            store.preload(
                graph
                    .nodes()
                    .iter()
                    .filter(|s| s.kind == kind)
                    .take(config.local_store_capacity)
                    .map(|s| s.name.as_str()),
            );
            let id = fpus.len();
            fpus.push(FpUnit::new(id, kind, store));
        }
    }
    fpus
}
