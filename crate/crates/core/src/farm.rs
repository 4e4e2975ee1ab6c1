//! Execution units and their memory system.
//!
//! Each unit owns a small local store holding function code by name, with
//! least-recently-used replacement. A lookup that hits costs the store's
//! hit latency; a miss additionally pays the shared interconnect for
//! pulling the code across, fixed overhead plus a per-word charge, and
//! installs the code as most recent.

use std::collections::VecDeque;
use thiserror::Error;

use crate::funpiler::{FunctionInstance, LifecycleState};
use crate::program::FunctionKind;

/// Shared bus between backing store and the units' local stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interconnect {
    pub fixed_overhead: u64,
    pub per_word_latency: u64,
}

impl Interconnect {
    pub fn transfer_time(&self, words: u64) -> u64 {
        self.fixed_overhead
            .saturating_add(self.per_word_latency.saturating_mul(words))
    }
}

/// Per-unit code store, most recently used at the front.
#[derive(Debug, Clone)]
pub struct LocalStore {
    capacity: usize,
    hit_latency: u64,
    resident: VecDeque<String>,
}

impl LocalStore {
    pub fn new(capacity: usize, hit_latency: u64) -> LocalStore {
        LocalStore {
            capacity,
            hit_latency,
            resident: VecDeque::new(),
        }
    }

    /// Warm the store as if the names were touched in order; the last one
    /// preloaded ends up most recent.
    pub fn preload<'a>(&mut self, names: impl IntoIterator<Item = &'a str>) {
        for name in names {
            self.install(name);
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resident.iter().any(|r| r == name)
    }

    /// Resident names, most recent first.
    pub fn resident(&self) -> impl Iterator<Item = &str> {
        self.resident.iter().map(String::as_str)
    }

    /// Fetch `name`, paying the bus for `words` on a miss. Returns the
    /// latency and whether it hit.
    pub fn lookup(&mut self, name: &str, words: u64, bus: &Interconnect) -> (u64, bool) {
        if let Some(pos) = self.resident.iter().position(|r| r == name) {
            let entry = self.resident.remove(pos).unwrap();
            self.resident.push_front(entry);
            (self.hit_latency, true)
        } else {
            self.install(name);
            (
                self.hit_latency.saturating_add(bus.transfer_time(words)),
                false,
            )
        }
    }

    fn install(&mut self, name: &str) {
        self.resident.push_front(name.to_string());
        while self.resident.len() > self.capacity {
            self.resident.pop_back();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FarmError {
    #[error("unit {fpu} handles {fpu_kind}, cannot run a {fn_kind} function")]
    KindMismatch {
        fpu: usize,
        fpu_kind: FunctionKind,
        fn_kind: FunctionKind,
    },
    #[error("unit {fpu} is busy until cycle {busy_until}")]
    FpuBusy { fpu: usize, busy_until: u64 },
}

/// What a unit agreed to when it accepted a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub lookup_latency: u64,
    pub hit: bool,
    /// Cycles of actual execution in this stint (the full remainder, or
    /// the portion before a scripted yield).
    pub service_cycles: u64,
    pub ends_at: u64,
    pub ends_with_yield: bool,
}

/// One execution unit of a fixed kind.
#[derive(Debug, Clone)]
pub struct FpUnit {
    pub id: usize,
    pub kind: FunctionKind,
    pub store: LocalStore,
    busy_until: u64,
    current: Option<usize>,
    /// Execution cycles delivered so far; code lookups are overhead and do
    /// not count.
    pub busy_cycles: u64,
}

impl FpUnit {
    pub fn new(id: usize, kind: FunctionKind, store: LocalStore) -> FpUnit {
        FpUnit {
            id,
            kind,
            store,
            busy_until: 0,
            current: None,
            busy_cycles: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.current.is_none()
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    /// Accept a dispatched function at cycle `now`: perform the code
    /// lookup, then run without preemption until the remainder is done or
    /// a scripted yield fires.
    pub fn begin_execution(
        &mut self,
        inst: &mut FunctionInstance,
        inst_idx: usize,
        now: u64,
        bus: &Interconnect,
    ) -> Result<ExecutionPlan, FarmError> {
        if self.kind != inst.kind() {
            return Err(FarmError::KindMismatch {
                fpu: self.id,
                fpu_kind: self.kind,
                fn_kind: inst.kind(),
            });
        }
        if self.current.is_some() {
            return Err(FarmError::FpuBusy {
                fpu: self.id,
                busy_until: self.busy_until,
            });
        }
        if inst.state != LifecycleState::Running {
            inst.set_state(LifecycleState::Running);
        }
        let (lookup_latency, hit) = self.store.lookup(&inst.spec.name, inst.spec.code_size, bus);
        let (service_cycles, ends_with_yield) = match inst.spec.yield_after {
            Some(k) if !inst.yielded && k < inst.remaining_cost => (k, true),
            _ => (inst.remaining_cost, false),
        };
        let ends_at = now + lookup_latency + service_cycles;
        self.busy_until = ends_at;
        self.current = Some(inst_idx);
        Ok(ExecutionPlan {
            lookup_latency,
            hit,
            service_cycles,
            ends_at,
            ends_with_yield,
        })
    }

    /// Free the unit after a stint that delivered `executed` cycles.
    pub fn release(&mut self, executed: u64) {
        assert!(self.current.is_some(), "release of an idle unit");
        self.current = None;
        self.busy_until = 0;
        self.busy_cycles += executed;
    }

    /// Fraction of `horizon` spent executing.
    pub fn utilization(&self, horizon: u64) -> f64 {
        if horizon == 0 {
            0.0
        } else {
            self.busy_cycles as f64 / horizon as f64
        }
    }
}
