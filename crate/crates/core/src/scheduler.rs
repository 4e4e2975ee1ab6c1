//! Multilevel priority queue feeding the execution units.
//!
//! One FIFO per priority level. A dispatch scan walks levels from highest
//! to lowest and, within a level, front to back; every visited function is
//! matched against the lowest-numbered free unit of its kind. A function
//! whose kind has no free unit is skipped in place, it keeps its position
//! and does not block anything behind it. Matching never frees units, so a
//! single pass is enough.
//!
//! Woken sleepers and yielding functions rejoin at the tail of their level
//! like any fresh arrival; queue position within a level is therefore
//! always insertion order, tracked by a monotone sequence stamp.

use std::collections::VecDeque;
use thiserror::Error;

use crate::funpiler::{FunctionInstance, LifecycleState};
use crate::program::{FunctionKind, Mutability};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("function is already queued")]
    AlreadyQueued,
    #[error("priority level {level} outside machine range 0..{levels}")]
    LevelOutOfRange { level: u32, levels: u32 },
    #[error("function is not sleeping")]
    NotSleeping,
    #[error("function is not running or has nothing left to run")]
    NotRunning,
    #[error("priority is static and cannot be changed")]
    ImmutablePriority,
}

#[derive(Debug, Clone)]
pub struct MultilevelPriorityQueue {
    levels: Vec<VecDeque<usize>>,
    next_seq: u64,
}

impl MultilevelPriorityQueue {
    pub fn new(levels: u32) -> MultilevelPriorityQueue {
        assert!(levels >= 2, "need at least two priority levels");
        MultilevelPriorityQueue {
            levels: (0..levels).map(|_| VecDeque::new()).collect(),
            next_seq: 0,
        }
    }

    pub fn level_count(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn queued_len(&self) -> usize {
        self.levels.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(VecDeque::is_empty)
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.levels.iter().any(|q| q.contains(&idx))
    }

    /// Front-to-back contents of one level.
    pub fn level_contents(&self, level: u32) -> impl Iterator<Item = usize> + '_ {
        self.levels[level as usize].iter().copied()
    }

    /// Admit a fresh, ready function at the tail of its level. Returns the
    /// insertion sequence stamp.
    pub fn enqueue(
        &mut self,
        instances: &mut [FunctionInstance],
        idx: usize,
        now: u64,
    ) -> Result<u64, SchedError> {
        if instances[idx].state == LifecycleState::Queued {
            return Err(SchedError::AlreadyQueued);
        }
        self.check_level(instances[idx].priority.level)?;
        assert_eq!(
            instances[idx].state,
            LifecycleState::Ready,
            "only ready functions take the plain enqueue path"
        );
        Ok(self.admit(instances, idx, now))
    }

    /// Requeue a sleeper whose wait has elapsed.
    pub fn requeue_on_wake(
        &mut self,
        instances: &mut [FunctionInstance],
        idx: usize,
        now: u64,
    ) -> Result<u64, SchedError> {
        if instances[idx].state != LifecycleState::Sleeping {
            return Err(SchedError::NotSleeping);
        }
        Ok(self.admit(instances, idx, now))
    }

    /// Requeue a running function that gave up its unit with work left.
    pub fn yield_requeue(
        &mut self,
        instances: &mut [FunctionInstance],
        idx: usize,
        now: u64,
    ) -> Result<u64, SchedError> {
        if instances[idx].state != LifecycleState::Running || instances[idx].remaining_cost == 0 {
            return Err(SchedError::NotRunning);
        }
        Ok(self.admit(instances, idx, now))
    }

    /// Change a dynamic priority. A queued function moves to the tail of
    /// its new level; otherwise only the stored level changes and future
    /// insertions use it.
    pub fn set_dynamic_priority(
        &mut self,
        instances: &mut [FunctionInstance],
        idx: usize,
        new_level: u32,
    ) -> Result<(), SchedError> {
        self.check_level(new_level)?;
        if instances[idx].priority.mutability == Mutability::Static {
            return Err(SchedError::ImmutablePriority);
        }
        let old = instances[idx].priority.level;
        instances[idx].priority.level = new_level;
        if instances[idx].state == LifecycleState::Queued {
            let q = &mut self.levels[old as usize];
            let pos = q
                .iter()
                .position(|&i| i == idx)
                .expect("queued function missing from its level");
            q.remove(pos);
            let seq = self.next_seq;
            self.next_seq += 1;
            instances[idx].enqueue_seq = seq;
            self.levels[new_level as usize].push_back(idx);
        }
        Ok(())
    }

    /// One scan over the queue against the currently free units.
    ///
    /// Returns `(function index, unit id)` pairs in scan order: descending
    /// level, FIFO within a level. Matched functions leave the queue and
    /// become Running; skipped ones keep their positions.
    pub fn dispatch(
        &mut self,
        instances: &mut [FunctionInstance],
        free_fpus: &[(usize, FunctionKind)],
        now: u64,
    ) -> Vec<(usize, usize)> {
        let mut used = vec![false; free_fpus.len()];
        let mut matched: Vec<(usize, usize)> = Vec::new();
        for level in (0..self.levels.len()).rev() {
            let mut taken: Vec<usize> = Vec::new();
            for (pos, &inst_idx) in self.levels[level].iter().enumerate() {
                let kind = instances[inst_idx].kind();
                let mut best: Option<usize> = None;
                for (fpos, &(id, fkind)) in free_fpus.iter().enumerate() {
                    if used[fpos] || fkind != kind {
                        continue;
                    }
                    if best.is_none_or(|b| id < free_fpus[b].0) {
                        best = Some(fpos);
                    }
                }
                if let Some(fpos) = best {
                    used[fpos] = true;
                    taken.push(pos);
                    matched.push((inst_idx, free_fpus[fpos].0));
                }
            }
            if !taken.is_empty() {
                let kept: VecDeque<usize> = self.levels[level]
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| !taken.contains(pos))
                    .map(|(_, &i)| i)
                    .collect();
                self.levels[level] = kept;
            }
        }
        for &(inst_idx, _) in &matched {
            let inst = &mut instances[inst_idx];
            inst.set_state(LifecycleState::Running);
            if inst.first_dispatched_at.is_none() {
                inst.first_dispatched_at = Some(now);
            }
        }
        matched
    }

    fn check_level(&self, level: u32) -> Result<(), SchedError> {
        if level >= self.level_count() {
            return Err(SchedError::LevelOutOfRange {
                level,
                levels: self.level_count(),
            });
        }
        Ok(())
    }

    fn admit(&mut self, instances: &mut [FunctionInstance], idx: usize, now: u64) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        let inst = &mut instances[idx];
        inst.enqueue_seq = seq;
        inst.set_state(LifecycleState::Queued);
        if inst.first_enqueued_at.is_none() {
            inst.first_enqueued_at = Some(now);
        }
        self.levels[inst.priority.level as usize].push_back(idx);
        seq
    }
}
