//! Program representation: an ordered list of typed functions plus an
//! explicit dependency DAG over them.
//!
//! Program order (declaration order in the source text) is significant
//! everywhere downstream: it drives FID assignment, decode batching,
//! tie-breaking between simultaneous events and the commit order of the
//! integration buffer.

mod parse;

pub use parse::{parse_program, serialize_program};

use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// The six function classes the machine knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionKind {
    Arithmetic,
    Dsp,
    Graphics,
    StringOps,
    Io,
    System,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 6] = [
        FunctionKind::Arithmetic,
        FunctionKind::Dsp,
        FunctionKind::Graphics,
        FunctionKind::StringOps,
        FunctionKind::Io,
        FunctionKind::System,
    ];

    /// Keyword used in program and config files.
    pub fn token(self) -> &'static str {
        match self {
            FunctionKind::Arithmetic => "arith",
            FunctionKind::Dsp => "dsp",
            FunctionKind::Graphics => "graphics",
            FunctionKind::StringOps => "string",
            FunctionKind::Io => "io",
            FunctionKind::System => "system",
        }
    }

    pub fn from_token(token: &str) -> Option<FunctionKind> {
        Self::ALL.iter().copied().find(|k| k.token() == token)
    }

    /// Single-letter class prefix used when forming FIDs.
    pub fn prefix(self) -> char {
        match self {
            FunctionKind::Arithmetic => 'A',
            FunctionKind::Dsp => 'D',
            FunctionKind::Graphics => 'G',
            FunctionKind::StringOps => 'S',
            FunctionKind::Io => 'I',
            FunctionKind::System => 'Y',
        }
    }

    pub fn from_prefix(prefix: char) -> Option<FunctionKind> {
        Self::ALL.iter().copied().find(|k| k.prefix() == prefix)
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Whether a priority level may be changed after decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutability {
    Static,
    Dynamic,
}

/// Priority as written in the program text.
///
/// The source may name a level explicitly, mark it static, or leave both
/// out. Defaults depend on the function kind and on how many levels the
/// machine is configured with, so resolution is deferred to decode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrioritySpec {
    pub level: Option<u32>,
    pub is_static: bool,
}

/// A concrete priority after resolving defaults against a machine
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorityDescriptor {
    pub level: u32,
    pub mutability: Mutability,
}

impl PrioritySpec {
    /// Resolve against a machine with `levels` priority levels
    /// (0 = lowest, `levels - 1` = highest).
    ///
    /// System functions default to the highest level and, when nothing was
    /// written at all, are pinned static so user-level work cannot demote
    /// them. Everything else defaults to level 1, dynamic.
    pub fn resolve(self, kind: FunctionKind, levels: u32) -> PriorityDescriptor {
        let system = kind == FunctionKind::System;
        let level = self.level.unwrap_or(if system { levels - 1 } else { 1 });
        let mutability = if self.is_static || (system && self.level.is_none()) {
            Mutability::Static
        } else {
            Mutability::Dynamic
        };
        PriorityDescriptor { level, mutability }
    }
}

/// One declared function: the static facts the decoder needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpec {
    pub name: String,
    pub kind: FunctionKind,
    /// Pure execution cost in cycles, at least 1.
    pub cost: u64,
    pub priority: PrioritySpec,
    /// Code size in words; governs the bus transfer on a local-store miss.
    pub code_size: u64,
    /// Names of functions that must complete before this one may start.
    pub deps: Vec<String>,
    /// Cycles spent sleeping on a device after the compute phase, 0 for none.
    pub io_wait: u64,
    /// If set, the function yields its FPU once after executing this many
    /// cycles and rejoins the queue with the remainder.
    pub yield_after: Option<u64>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, kind: FunctionKind, cost: u64) -> FunctionSpec {
        FunctionSpec {
            name: name.into(),
            kind,
            cost,
            priority: PrioritySpec::default(),
            code_size: 1,
            deps: Vec::new(),
            io_wait: 0,
            yield_after: None,
        }
    }

    pub fn after(mut self, deps: &[&str]) -> FunctionSpec {
        self.deps = deps.iter().map(|d| d.to_string()).collect();
        self
    }

    pub fn prio(mut self, level: u32) -> FunctionSpec {
        self.priority.level = Some(level);
        self
    }

    pub fn pinned(mut self) -> FunctionSpec {
        self.priority.is_static = true;
        self
    }

    pub fn size(mut self, words: u64) -> FunctionSpec {
        self.code_size = words;
        self
    }

    pub fn io_wait(mut self, cycles: u64) -> FunctionSpec {
        self.io_wait = cycles;
        self
    }

    pub fn yields_after(mut self, cycles: u64) -> FunctionSpec {
        self.yield_after = Some(cycles);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate function name `{0}`")]
    DuplicateName(String),
    #[error("unknown function kind `{0}`")]
    UnknownKind(String),
    #[error("dependency on undeclared function `{0}`")]
    UnknownDependency(String),
    #[error("function `{name}` lists dependency `{dep}` more than once")]
    DuplicateDependency { name: String, dep: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
}

/// Error from [`ProgramGraph::ready_set`] when the completed set names a
/// function the program does not declare.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("completed set names unknown function `{0}`")]
pub struct UnknownName(pub String);

/// A validated program: unique names, resolvable dependencies, no cycles.
///
/// Nodes keep their declaration order; all adjacency is stored by index
/// into that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramGraph {
    nodes: Vec<FunctionSpec>,
    index: HashMap<String, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl ProgramGraph {
    pub fn from_specs(specs: Vec<FunctionSpec>) -> Result<ProgramGraph, ParseError> {
        let mut index = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(ParseError::DuplicateName(spec.name.clone()));
            }
        }

        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (i, spec) in specs.iter().enumerate() {
            let mut seen = HashSet::new();
            for dep in &spec.deps {
                let &d = index
                    .get(dep)
                    .ok_or_else(|| ParseError::UnknownDependency(dep.clone()))?;
                if !seen.insert(d) {
                    return Err(ParseError::DuplicateDependency {
                        name: spec.name.clone(),
                        dep: dep.clone(),
                    });
                }
                if d == i {
                    return Err(ParseError::CycleDetected(vec![spec.name.clone()]));
                }
                preds[i].push(d);
                succs[d].push(i);
            }
        }

        let graph = ProgramGraph {
            nodes: specs,
            index,
            preds,
            succs,
        };
        if let Some(cycle) = graph.find_cycle() {
            return Err(ParseError::CycleDetected(cycle));
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[FunctionSpec] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &FunctionSpec {
        &self.nodes[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Indices of functions that must complete before node `i` may start.
    pub fn preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub fn succs(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    pub fn edge_count(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    /// All `(pred, succ)` pairs, grouped by successor in program order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.preds
            .iter()
            .enumerate()
            .flat_map(|(succ, ps)| ps.iter().map(move |&p| (p, succ)))
    }

    /// Length in cost cycles of the longest dependency chain.
    ///
    /// This is a lower bound on any schedule's makespan: functions on the
    /// chain can never overlap, whatever the machine looks like.
    pub fn critical_path_length(&self) -> u64 {
        let mut longest = vec![0u64; self.nodes.len()];
        let mut best = 0;
        // Declaration order is a topological order only by accident, so walk
        // an explicit one.
        for i in self.topological_order() {
            let through = self.preds(i).iter().map(|&p| longest[p]).max().unwrap_or(0);
            longest[i] = through.saturating_add(self.nodes[i].cost);
            best = best.max(longest[i]);
        }
        best
    }

    /// Functions not yet complete whose dependencies all appear in
    /// `completed`, in program order.
    pub fn ready_set<'a>(
        &'a self,
        completed: &HashSet<String>,
    ) -> Result<Vec<&'a str>, UnknownName> {
        for name in completed {
            if !self.index.contains_key(name) {
                return Err(UnknownName(name.clone()));
            }
        }
        let done = |i: usize| completed.contains(&self.nodes[i].name);
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(i, _)| !done(i) && self.preds(i).iter().all(|&p| done(p)))
            .map(|(_, spec)| spec.name.as_str())
            .collect())
    }

    /// Kahn's algorithm, always choosing the smallest available index so
    /// the order is deterministic.
    fn topological_order(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut missing: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut frontier: Vec<usize> = (0..n).filter(|&i| missing[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut cursor = 0;
        while cursor < frontier.len() {
            // frontier stays sorted because new entries always carry larger
            // discovery ranks than the cursor; sort the tail to keep the
            // smallest-index rule exact.
            frontier[cursor..].sort_unstable();
            let i = frontier[cursor];
            cursor += 1;
            order.push(i);
            for &s in self.succs(i) {
                missing[s] -= 1;
                if missing[s] == 0 {
                    frontier.push(s);
                }
            }
        }
        order
    }

    /// Depth-first search for a back edge; returns the cycle as a name list
    /// starting from the earliest-declared node on it.
    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let n = self.nodes.len();
        let mut color = vec![Color::White; n];
        let mut stack: Vec<usize> = Vec::new();

        fn visit(
            g: &ProgramGraph,
            i: usize,
            color: &mut [Color],
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            color[i] = Color::Gray;
            stack.push(i);
            for &s in g.succs(i) {
                match color[s] {
                    Color::Gray => {
                        let start = stack.iter().position(|&x| x == s).unwrap();
                        return Some(stack[start..].to_vec());
                    }
                    Color::White => {
                        if let Some(c) = visit(g, s, color, stack) {
                            return Some(c);
                        }
                    }
                    Color::Black => {}
                }
            }
            stack.pop();
            color[i] = Color::Black;
            None
        }

        for i in 0..n {
            if color[i] == Color::White {
                if let Some(cycle) = visit(self, i, &mut color, &mut stack) {
                    return Some(cycle.iter().map(|&i| self.nodes[i].name.clone()).collect());
                }
            }
        }
        None
    }
}
