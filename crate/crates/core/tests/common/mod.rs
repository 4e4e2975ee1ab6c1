//! Shared harness for the integration suites: seeded workload generators,
//! an independent reference simulator, and a trace replay checker.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::rngs::StdRng;
use rand::Rng;

use fpa_core::program::{FunctionKind, FunctionSpec, ProgramGraph};
use fpa_core::trace::{Trace, TraceEvent};
use fpa_core::SimulationConfig;

// ---------------------------------------------------------------------------
// Workload generation

pub struct GenOptions {
    pub max_fns: usize,
    pub max_cost: u64,
    pub kinds: Vec<FunctionKind>,
    pub max_units_per_kind: u32,
    pub with_io: bool,
    pub with_yields: bool,
    pub vary_machine: bool,
}

impl GenOptions {
    /// Small cases for oracle equivalence: at most 12 nodes, at most 3
    /// units in total, costs at most 10.
    pub fn oracle_sized(with_io: bool, with_yields: bool) -> GenOptions {
        GenOptions {
            max_fns: 12,
            max_cost: 10,
            kinds: vec![FunctionKind::Arithmetic, FunctionKind::Dsp],
            max_units_per_kind: 1,
            with_io,
            with_yields,
            vary_machine: true,
        }
    }

    /// Wider cases for the invariant sweep.
    pub fn invariant_sized() -> GenOptions {
        GenOptions {
            max_fns: 20,
            max_cost: 12,
            kinds: FunctionKind::ALL.to_vec(),
            max_units_per_kind: 3,
            with_io: true,
            with_yields: true,
            vary_machine: true,
        }
    }
}

/// One random scenario: a machine and a program it can run.
pub fn random_case(rng: &mut StdRng, opts: &GenOptions) -> (SimulationConfig, ProgramGraph) {
    let mut config = SimulationConfig::default();
    // Use a random subset of the allowed kinds so farms differ in shape.
    let mut kinds: Vec<FunctionKind> = opts
        .kinds
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.7))
        .collect();
    if kinds.is_empty() {
        kinds.push(opts.kinds[rng.random_range(0..opts.kinds.len())]);
    }
    if opts.max_units_per_kind == 1 {
        // Oracle-sized machines stay at three units or fewer: up to two
        // kinds, and at most one of them doubled.
        kinds.truncate(2);
        let double = rng.random_range(0..=kinds.len());
        config.fpus = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, if i + 1 == double { 2 } else { 1 }))
            .collect();
    } else {
        config.fpus = kinds
            .iter()
            .map(|&k| (k, rng.random_range(1..=opts.max_units_per_kind)))
            .collect();
    }
    if opts.vary_machine {
        config.decode_width = rng.random_range(1..=10);
        config.priority_levels = rng.random_range(2..=8);
        config.hit_latency = rng.random_range(0..=2);
        config.miss_per_word = rng.random_range(0..=3);
        config.bus_overhead = rng.random_range(0..=4);
        config.local_store_capacity = rng.random_range(0..=8);
    }
    let program = random_program(rng, &kinds, opts, config.priority_levels);
    (config, program)
}

pub fn random_program(
    rng: &mut StdRng,
    kinds: &[FunctionKind],
    opts: &GenOptions,
    priority_levels: u32,
) -> ProgramGraph {
    let n = rng.random_range(1..=opts.max_fns);
    let mut specs = Vec::with_capacity(n);
    for i in 0..n {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let cost = rng.random_range(1..=opts.max_cost);
        let mut spec = FunctionSpec::new(format!("fn{i}"), kind, cost);
        if rng.random_bool(0.55) {
            spec.priority.level = Some(rng.random_range(0..priority_levels));
        }
        if rng.random_bool(0.15) {
            spec.priority.is_static = true;
        }
        spec.code_size = rng.random_range(0..=6);
        for j in 0..i {
            if rng.random_bool(2.0 / (i as f64 + 4.0)) {
                spec.deps.push(format!("fn{j}"));
            }
        }
        if opts.with_io && rng.random_bool(0.25) {
            spec.io_wait = rng.random_range(1..=15);
        }
        if opts.with_yields && rng.random_bool(0.25) {
            // Sometimes past the full cost, in which case the yield never
            // fires; both sides of that predicate deserve coverage.
            spec.yield_after = Some(rng.random_range(1..=cost + 2));
        }
        specs.push(spec);
    }
    ProgramGraph::from_specs(specs).unwrap()
}

// ---------------------------------------------------------------------------
// Reference simulator
//
// A deliberately naive re-implementation of the machine's rules: no event
// queue, no shared code with the engine. It steps cycle by cycle and
// re-derives FIDs, priority defaults, store contents and the scan from
// scratch, so any agreement with the engine is earned, not inherited.

pub struct OracleRun {
    pub makespan: u64,
    /// Every dispatch, in order: (cycle, fid, unit id).
    pub dispatches: Vec<(u64, String, usize)>,
    pub completed_at: Vec<u64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Ph {
    Waiting,
    Queued,
    Running,
    Sleeping,
    Done,
}

struct OracleStore {
    capacity: usize,
    names: Vec<String>, // least recent first, most recent last
}

impl OracleStore {
    fn touch(&mut self, name: &str) -> bool {
        if let Some(pos) = self.names.iter().position(|n| n == name) {
            let n = self.names.remove(pos);
            self.names.push(n);
            return true;
        }
        self.names.push(name.to_string());
        if self.names.len() > self.capacity {
            self.names.remove(0);
        }
        false
    }
}

pub fn oracle_run(graph: &ProgramGraph, config: &SimulationConfig) -> OracleRun {
    let n = graph.len();
    let levels = config.priority_levels;

    // FIDs, derived from first principles.
    let mut counts: HashMap<char, u32> = HashMap::new();
    let fids: Vec<String> = graph
        .nodes()
        .iter()
        .map(|s| {
            let prefix = match s.kind {
                FunctionKind::Arithmetic => 'A',
                FunctionKind::Dsp => 'D',
                FunctionKind::Graphics => 'G',
                FunctionKind::StringOps => 'S',
                FunctionKind::Io => 'I',
                FunctionKind::System => 'Y',
            };
            let c = counts.entry(prefix).or_insert(0);
            *c += 1;
            format!("{prefix}{c}")
        })
        .collect();

    // Priority levels, defaults re-derived.
    let level: Vec<u32> = graph
        .nodes()
        .iter()
        .map(|s| {
            s.priority
                .level
                .unwrap_or(if s.kind == FunctionKind::System {
                    levels - 1
                } else {
                    1
                })
        })
        .collect();

    let decode_at: Vec<u64> = (0..n).map(|i| i as u64 / config.decode_width).collect();

    // The farm: flat unit list plus per-unit stores warmed with the first
    // declared functions of the matching kind.
    let unit_kinds: Vec<FunctionKind> = config
        .fpus
        .iter()
        .flat_map(|&(k, c)| std::iter::repeat_n(k, c as usize))
        .collect();
    let mut stores: Vec<OracleStore> = unit_kinds
        .iter()
        .map(|&k| {
            let mut store = OracleStore {
                capacity: config.local_store_capacity,
                names: Vec::new(),
            };
            if store.capacity > 0 {
                for s in graph
                    .nodes()
                    .iter()
                    .filter(|s| s.kind == k)
                    .take(store.capacity)
                {
                    store.touch(&s.name);
                }
            }
            store
        })
        .collect();

    struct St {
        ph: Ph,
        remaining: u64,
        slept: bool,
        yielded: bool,
        wake_at: u64,
        run_end: u64,
        run_is_yield: bool,
        run_stint: u64,
        unit: usize,
        completed_at: u64,
    }
    let mut st: Vec<St> = graph
        .nodes()
        .iter()
        .map(|s| St {
            ph: Ph::Waiting,
            remaining: s.cost,
            slept: false,
            yielded: false,
            wake_at: 0,
            run_end: 0,
            run_is_yield: false,
            run_stint: 0,
            unit: 0,
            completed_at: 0,
        })
        .collect();

    let mut queue: Vec<(u32, u64, usize)> = Vec::new(); // (level, stamp, idx)
    let mut stamp = 0u64;
    let mut unit_busy = vec![false; unit_kinds.len()];
    let mut dispatches = Vec::new();

    if n == 0 {
        return OracleRun {
            makespan: 0,
            dispatches,
            completed_at: Vec::new(),
        };
    }

    let mut cycle = 0u64;
    loop {
        // Stage 2: completions, in program order.
        for i in 0..n {
            if st[i].ph == Ph::Running && st[i].run_end == cycle && !st[i].run_is_yield {
                unit_busy[st[i].unit] = false;
                if graph.node(i).io_wait > 0 && !st[i].slept {
                    st[i].ph = Ph::Sleeping;
                    st[i].slept = true;
                    st[i].remaining = 1;
                    st[i].wake_at = cycle + graph.node(i).io_wait;
                } else {
                    st[i].ph = Ph::Done;
                    st[i].completed_at = cycle;
                }
            }
        }
        // Stage 3: wakes.
        for i in 0..n {
            if st[i].ph == Ph::Sleeping && st[i].wake_at == cycle {
                st[i].ph = Ph::Queued;
                queue.push((level[i], stamp, i));
                stamp += 1;
            }
        }
        // Stage 4: yields.
        for i in 0..n {
            if st[i].ph == Ph::Running && st[i].run_end == cycle && st[i].run_is_yield {
                unit_busy[st[i].unit] = false;
                st[i].remaining -= st[i].run_stint;
                st[i].yielded = true;
                st[i].ph = Ph::Queued;
                queue.push((level[i], stamp, i));
                stamp += 1;
            }
        }
        // Stage 5: freshly ready functions.
        for i in 0..n {
            if st[i].ph == Ph::Waiting
                && decode_at[i] <= cycle
                && graph.preds(i).iter().all(|&p| st[p].ph == Ph::Done)
            {
                st[i].ph = Ph::Queued;
                queue.push((level[i], stamp, i));
                stamp += 1;
            }
        }
        // Stage 6: one scan, highest level first, FIFO inside a level.
        let mut scan: Vec<(u32, u64, usize)> = queue.clone();
        scan.sort_by_key(|&(l, s, _)| (std::cmp::Reverse(l), s));
        let mut taken_this_scan = vec![false; unit_kinds.len()];
        for (_, s, i) in scan {
            let kind = graph.node(i).kind;
            let unit = (0..unit_kinds.len())
                .find(|&u| unit_kinds[u] == kind && !unit_busy[u] && !taken_this_scan[u]);
            let Some(unit) = unit else { continue };
            taken_this_scan[unit] = true;
            unit_busy[unit] = true;
            queue.retain(|&(_, qs, _)| qs != s);
            let spec = graph.node(i);
            let lookup = if stores[unit].touch(&spec.name) {
                config.hit_latency
            } else {
                config.hit_latency + config.bus_overhead + config.miss_per_word * spec.code_size
            };
            let (stint, is_yield) = match spec.yield_after {
                Some(k) if !st[i].yielded && k < st[i].remaining => (k, true),
                _ => (st[i].remaining, false),
            };
            st[i].ph = Ph::Running;
            st[i].unit = unit;
            st[i].run_end = cycle + lookup + stint;
            st[i].run_is_yield = is_yield;
            st[i].run_stint = stint;
            dispatches.push((cycle, fids[i].clone(), unit));
        }

        if st.iter().all(|s| s.ph == Ph::Done) {
            break;
        }
        cycle += 1;
        assert!(cycle < 10_000_000, "reference simulator ran away");
    }

    OracleRun {
        makespan: st.iter().map(|s| s.completed_at).max().unwrap_or(0),
        dispatches,
        completed_at: st.iter().map(|s| s.completed_at).collect(),
    }
}

// ---------------------------------------------------------------------------
// Trace replay checker

/// Replay a trace against the scheduling contract: dependency safety, FIFO
/// within a level, level precedence, non-preemption, conservation, and
/// in-order commit. Returns a description of the first violation.
pub fn check_trace(
    trace: &Trace,
    graph: &ProgramGraph,
    config: &SimulationConfig,
) -> Result<(), String> {
    let n = graph.len();
    let unit_kinds: Vec<FunctionKind> = config
        .fpus
        .iter()
        .flat_map(|&(k, c)| std::iter::repeat_n(k, c as usize))
        .collect();

    let mut queued: HashMap<String, u32> = HashMap::new();
    let mut busy: HashMap<usize, String> = HashMap::new();
    let mut decode_order: Vec<String> = Vec::new();
    let mut seen: HashMap<TraceEvent, HashSet<String>> = HashMap::new();
    let mut first_enqueue_row: HashMap<String, usize> = HashMap::new();
    let mut enqueue_level: HashMap<String, u32> = HashMap::new();
    let mut first_dispatch_row: HashMap<String, usize> = HashMap::new();
    let mut first_dispatch_cycle: HashMap<String, u64> = HashMap::new();
    let mut complete_cycle: HashMap<String, u64> = HashMap::new();
    let mut disturbed: HashSet<String> = HashSet::new(); // ever woken or yielded
    let mut integrates: Vec<(u64, usize)> = Vec::new();

    let rows = trace.records();
    let mut at = 0usize;
    let mut prev_cycle = 0u64;
    while at < rows.len() {
        let cycle = rows[at].cycle;
        if cycle < prev_cycle {
            return Err(format!("trace goes backwards at cycle {cycle}"));
        }
        prev_cycle = cycle;
        let end = rows[at..]
            .iter()
            .position(|r| r.cycle != cycle)
            .map_or(rows.len(), |p| at + p);

        let mut snapshot: Option<HashMap<String, u32>> = None;
        let mut dispatched_now: Vec<(String, u32, FunctionKind)> = Vec::new();

        for (ri, r) in rows.iter().enumerate().take(end).skip(at) {
            let fid = r.fid.clone();
            seen.entry(r.event).or_default().insert(fid.clone());
            match r.event {
                TraceEvent::Decode => {
                    if decode_order.contains(&fid) {
                        return Err(format!("{fid} decoded twice"));
                    }
                    decode_order.push(fid);
                }
                TraceEvent::Ready => {}
                TraceEvent::Enqueue | TraceEvent::Wake | TraceEvent::Yield => {
                    let level = detail_field(&r.detail, "level")
                        .ok_or_else(|| format!("{fid} queue row without level: `{}`", r.detail))?
                        as u32;
                    if r.event == TraceEvent::Yield {
                        let unit = r.fpu.ok_or_else(|| format!("{fid} yield without unit"))?;
                        release_unit(&mut busy, unit, &fid)?;
                    }
                    if r.event != TraceEvent::Enqueue {
                        disturbed.insert(fid.clone());
                    } else {
                        first_enqueue_row.entry(fid.clone()).or_insert(ri);
                        enqueue_level.entry(fid.clone()).or_insert(level);
                    }
                    if queued.insert(fid.clone(), level).is_some() {
                        return Err(format!("{fid} queued while already queued"));
                    }
                }
                TraceEvent::Dispatch => {
                    if snapshot.is_none() {
                        snapshot = Some(queued.clone());
                    }
                    let level = queued
                        .remove(&fid)
                        .ok_or_else(|| format!("{fid} dispatched while not queued"))?;
                    let unit = r.fpu.ok_or_else(|| format!("{fid} dispatched nowhere"))?;
                    let kind = fpa_core::route(&fid).map_err(|e| e.to_string())?;
                    if unit >= unit_kinds.len() {
                        return Err(format!("{fid} dispatched to unknown unit {unit}"));
                    }
                    if unit_kinds[unit] != kind {
                        return Err(format!(
                            "{fid} ({kind}) dispatched to a {} unit",
                            unit_kinds[unit]
                        ));
                    }
                    // Non-preemption: the unit must be idle.
                    if let Some(owner) = busy.insert(unit, fid.clone()) {
                        return Err(format!(
                            "{fid} dispatched to unit {unit} still running {owner}"
                        ));
                    }
                    first_dispatch_row.entry(fid.clone()).or_insert(ri);
                    first_dispatch_cycle.entry(fid.clone()).or_insert(cycle);
                    dispatched_now.push((fid, level, kind));
                }
                TraceEvent::Sleep => {
                    let unit = r.fpu.ok_or_else(|| format!("{fid} sleep without unit"))?;
                    release_unit(&mut busy, unit, &fid)?;
                    disturbed.insert(fid);
                }
                TraceEvent::Complete => {
                    let unit = r
                        .fpu
                        .ok_or_else(|| format!("{fid} complete without unit"))?;
                    release_unit(&mut busy, unit, &fid)?;
                    if complete_cycle.insert(fid.clone(), cycle).is_some() {
                        return Err(format!("{fid} completed twice"));
                    }
                }
                TraceEvent::Integrate => {
                    let index = detail_field(&r.detail, "index")
                        .ok_or_else(|| format!("{fid} integrate without index"))?;
                    integrates.push((cycle, index as usize));
                }
            }
        }

        // Level precedence: nothing left queued at a higher level with the
        // same kind as anything dispatched this scan.
        if let Some(snap) = snapshot {
            for (d_fid, d_level, d_kind) in &dispatched_now {
                for (q_fid, q_level) in &snap {
                    if dispatched_now.iter().any(|(f, _, _)| f == q_fid) {
                        continue;
                    }
                    let q_kind = fpa_core::route(q_fid).map_err(|e| e.to_string())?;
                    if q_kind == *d_kind && *q_level > *d_level {
                        return Err(format!(
                            "priority inversion at cycle {}: {} (level {}) dispatched while {} (level {}) waited",
                            cycle, d_fid, d_level, q_fid, q_level
                        ));
                    }
                }
            }
        }
        at = end;
    }

    // Conservation: every function passes through every lifecycle event.
    if decode_order.len() != n {
        return Err(format!("decoded {} of {} functions", decode_order.len(), n));
    }
    for event in [
        TraceEvent::Decode,
        TraceEvent::Ready,
        TraceEvent::Enqueue,
        TraceEvent::Dispatch,
        TraceEvent::Complete,
        TraceEvent::Integrate,
    ] {
        let count = seen.get(&event).map_or(0, HashSet::len);
        if count != n {
            return Err(format!("{event} touched {count} of {n} functions"));
        }
    }
    if !busy.is_empty() || !queued.is_empty() {
        return Err("trace ends with work still queued or running".into());
    }

    // Commit order is program order, one commit per function.
    if integrates.len() != n {
        return Err(format!("{} commits for {} functions", integrates.len(), n));
    }
    for (pos, &(_, index)) in integrates.iter().enumerate() {
        if index != pos {
            return Err(format!("commit {pos} was program index {index}"));
        }
    }

    // Dependency safety: nothing starts before its predecessors finish.
    for (p, s) in graph.edges() {
        let p_fid = &decode_order[p];
        let s_fid = &decode_order[s];
        let p_done = complete_cycle[p_fid];
        let s_start = first_dispatch_cycle[s_fid];
        if s_start < p_done {
            return Err(format!(
                "{s_fid} started at {s_start} before its predecessor {p_fid} finished at {p_done}"
            ));
        }
    }

    // FIFO within a level, for functions that never woke or yielded.
    for (i, f) in decode_order.iter().enumerate() {
        for g in decode_order.iter().skip(i + 1) {
            if disturbed.contains(f) || disturbed.contains(g) {
                continue;
            }
            if enqueue_level[f] != enqueue_level[g] {
                continue;
            }
            let fk = fpa_core::route(f).map_err(|e| e.to_string())?;
            let gk = fpa_core::route(g).map_err(|e| e.to_string())?;
            if fk != gk {
                continue;
            }
            let (first, second) = if first_enqueue_row[f] < first_enqueue_row[g] {
                (f, g)
            } else {
                (g, f)
            };
            if first_dispatch_row[first] > first_dispatch_row[second] {
                return Err(format!(
                    "FIFO violation: {first} enqueued before {second} but dispatched after it"
                ));
            }
        }
    }

    Ok(())
}

fn release_unit(busy: &mut HashMap<usize, String>, unit: usize, fid: &str) -> Result<(), String> {
    match busy.remove(&unit) {
        Some(owner) if owner == fid => Ok(()),
        Some(owner) => Err(format!("unit {unit} released by {fid} but ran {owner}")),
        None => Err(format!("{fid} released idle unit {unit}")),
    }
}

/// Read `key:<number>` out of a space-separated detail string.
fn detail_field(detail: &str, key: &str) -> Option<u64> {
    detail.split(' ').find_map(|part| {
        let (k, v) = part.split_once(':')?;
        if k == key {
            v.parse().ok()
        } else {
            None
        }
    })
}

/// The two analytic lower bounds every legal schedule respects.
pub fn check_makespan_bounds(
    graph: &ProgramGraph,
    config: &SimulationConfig,
    makespan: u64,
) -> Result<(), String> {
    let cp = graph.critical_path_length();
    if makespan < cp {
        return Err(format!("makespan {makespan} below critical path {cp}"));
    }
    for kind in FunctionKind::ALL {
        let work: u64 = graph
            .nodes()
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.cost)
            .sum();
        if work == 0 {
            continue;
        }
        let units = config.fpu_count(kind) as u64;
        if units == 0 {
            return Err(format!("work of kind {kind} with no unit"));
        }
        // makespan >= work / units, kept in integers.
        if makespan * units < work {
            return Err(format!(
                "makespan {makespan} cannot cover {work} cycles of {kind} work on {units} unit(s)"
            ));
        }
    }
    Ok(())
}
