//! Cycle-accurate simulator of a function-oriented processor.
//!
//! The machine under study replaces a fetched instruction stream with
//! decoded whole functions: a program is an ordered set of typed
//! functions with dependencies, the decoder classifies each one and
//! assigns it a class-prefixed identifier, a multilevel FIFO priority
//! queue pushes work to a farm of kind-matched execution units with
//! small local code stores, and an integration buffer commits results
//! back in program order. A sequential fetch-style machine is modeled
//! alongside as the baseline the push feed is measured against.
//!
//! The pipeline maps onto modules:
//!
//! * [`program`]: the source format and dependency graph,
//! * [`funpiler`]: decode, FID assignment and routing,
//! * [`scheduler`]: the multilevel priority queue,
//! * [`farm`]: execution units, local stores and the interconnect,
//! * [`sim`]: the discrete-event engine and the fetch baseline,
//! * [`trace`]: the CSV event log,
//! * [`stats`]: run statistics and report documents,
//! * [`config`]: machine description files.
//!
//! Everything is deterministic: same program plus same configuration
//! yields byte-identical traces and reports, with no tolerance windows.

pub mod config;
pub mod farm;
pub mod funpiler;
pub mod program;
pub mod scheduler;
pub mod sim;
pub mod stats;
pub mod trace;

pub use config::{ConfigError, Mode, SimulationConfig};
pub use funpiler::{decode, route, Fid, FunctionInstance, LifecycleState};
pub use program::{
    parse_program, serialize_program, FunctionKind, FunctionSpec, ParseError, ProgramGraph,
};
pub use sim::{run, run_compare, run_fetch_baseline, CompareOutcome, SimError, SimOutcome};
pub use stats::{compute_stats, CompareReport, FunctionStats, Report, RunStats, StatsError};
pub use trace::{Trace, TraceEvent, TraceRecord, TRACE_HEADER};
