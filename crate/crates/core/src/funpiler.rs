//! Decode stage: turn declared functions into runtime instances.
//!
//! Each function gets a function identifier (FID) of the form `<class
//! prefix><sequence>`; sequences count per class starting at 1, in program
//! order, so two DSP functions followed by an arithmetic one become D1, D2,
//! A1. The prefix alone is enough to steer an instance to a matching
//! execution unit, which is what [`route`] does.

use std::fmt;
use thiserror::Error;

use crate::program::{FunctionKind, FunctionSpec, PriorityDescriptor, ProgramGraph};

/// Class-prefixed function identifier, e.g. `D2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fid {
    kind: FunctionKind,
    sequence: u32,
}

impl Fid {
    pub fn new(kind: FunctionKind, sequence: u32) -> Fid {
        debug_assert!(sequence >= 1, "FID sequences start at 1");
        Fid { kind, sequence }
    }

    pub fn kind(self) -> FunctionKind {
        self.kind
    }

    pub fn sequence(self) -> u32 {
        self.sequence
    }
}

impl fmt::Display for Fid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.sequence)
    }
}

/// Hands out per-class sequence numbers.
#[derive(Debug, Default)]
pub struct FidAllocator {
    issued: [u32; FunctionKind::ALL.len()],
}

impl FidAllocator {
    pub fn new() -> FidAllocator {
        FidAllocator::default()
    }

    pub fn assign(&mut self, kind: FunctionKind) -> Fid {
        let slot = FunctionKind::ALL.iter().position(|&k| k == kind).unwrap();
        self.issued[slot] += 1;
        Fid::new(kind, self.issued[slot])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("empty FID")]
    EmptyFid,
    #[error("unknown FID prefix `{0}`")]
    UnknownPrefix(char),
}

/// Recover the execution class from a rendered FID.
pub fn route(fid: &str) -> Result<FunctionKind, RouteError> {
    let first = fid.chars().next().ok_or(RouteError::EmptyFid)?;
    FunctionKind::from_prefix(first).ok_or(RouteError::UnknownPrefix(first))
}

/// Where an instance sits in its life, from decode to commit.
///
/// Transitions only ever move along:
///
/// ```text
/// Decoded -> Ready -> Queued -> Running -> Completed -> Integrated
///                        ^          |
///                        +- Sleeping/yield loop back to Queued
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleState {
    Decoded,
    Ready,
    Queued,
    Running,
    Sleeping,
    Completed,
    Integrated,
}

impl LifecycleState {
    pub fn can_transition(self, to: LifecycleState) -> bool {
        use LifecycleState::*;
        matches!(
            (self, to),
            (Decoded, Ready)
                | (Ready, Queued)
                | (Queued, Running)
                | (Running, Sleeping)
                | (Running, Queued)
                | (Running, Completed)
                | (Sleeping, Queued)
                | (Completed, Integrated)
        )
    }
}

/// Fatal decode problems.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("function `{name}` asks for priority level {level}, machine has levels 0..{levels}")]
    LevelOutOfRange {
        name: String,
        level: u32,
        levels: u32,
    },
}

/// A decoded function with its runtime bookkeeping.
#[derive(Debug, Clone)]
pub struct FunctionInstance {
    pub spec: FunctionSpec,
    /// Position in the program, which is also the required commit position.
    pub program_index: usize,
    pub fid: Fid,
    pub priority: PriorityDescriptor,
    /// Cycle at which the decoder emits this instance.
    pub decode_time: u64,
    pub state: LifecycleState,
    /// Execution cycles still owed; counts down across yields, and is reset
    /// to 1 for the post-sleep completion step.
    pub remaining_cost: u64,
    /// An instance sleeps at most once, after its compute phase.
    pub slept: bool,
    /// A scripted yield fires at most once.
    pub yielded: bool,
    /// Tail-order stamp of the most recent queue insertion.
    pub enqueue_seq: u64,
    pub first_enqueued_at: Option<u64>,
    pub first_dispatched_at: Option<u64>,
    pub completed_at: Option<u64>,
    pub integrated_at: Option<u64>,
}

impl FunctionInstance {
    fn new(
        spec: FunctionSpec,
        program_index: usize,
        fid: Fid,
        priority: PriorityDescriptor,
        decode_time: u64,
    ) -> FunctionInstance {
        let remaining_cost = spec.cost;
        FunctionInstance {
            spec,
            program_index,
            fid,
            priority,
            decode_time,
            state: LifecycleState::Decoded,
            remaining_cost,
            slept: false,
            yielded: false,
            enqueue_seq: 0,
            first_enqueued_at: None,
            first_dispatched_at: None,
            completed_at: None,
            integrated_at: None,
        }
    }

    pub fn kind(&self) -> FunctionKind {
        self.spec.kind
    }

    /// Move to `to`, panicking on any transition the lifecycle diagram does
    /// not allow; such a move is always an engine bug, never bad input.
    pub fn set_state(&mut self, to: LifecycleState) {
        assert!(
            self.state.can_transition(to),
            "{}: illegal state transition {:?} -> {:?}",
            self.fid,
            self.state,
            to
        );
        self.state = to;
    }
}

/// Decode a whole program: FIDs in program order, priorities resolved
/// against `priority_levels`, decode cycles batched `decode_width` at a
/// time (functions `0..width` at cycle 0, the next `width` at cycle 1, and
/// so on).
pub fn decode(
    graph: &ProgramGraph,
    decode_width: u64,
    priority_levels: u32,
) -> Result<Vec<FunctionInstance>, DecodeError> {
    assert!(decode_width >= 1, "decode width must be positive");
    let mut allocator = FidAllocator::new();
    let mut instances = Vec::with_capacity(graph.len());
    for (i, spec) in graph.nodes().iter().enumerate() {
        let fid = allocator.assign(spec.kind);
        let priority = spec.priority.resolve(spec.kind, priority_levels);
        if priority.level >= priority_levels {
            return Err(DecodeError::LevelOutOfRange {
                name: spec.name.clone(),
                level: priority.level,
                levels: priority_levels,
            });
        }
        let decode_time = i as u64 / decode_width;
        instances.push(FunctionInstance::new(
            spec.clone(),
            i,
            fid,
            priority,
            decode_time,
        ));
    }
    Ok(instances)
}
