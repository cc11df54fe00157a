//! Cascade: a task-based parallel runtime with pluggable execution
//! back-ends.
//!
//! Programs submit coarse tasks over hierarchically partitioned matrices to
//! a [`Dispatcher`]. A configurable flow graph of executor nodes then
//! recursively splits tasks toward leaf regions and runs sequential kernels
//! on them, tracking data dependencies per node through access epochs. The
//! same program text runs unchanged on a sequential back-end, a worker
//! pool, or a simulated-distributed back-end that stages remote reads as
//! explicit block transfers.
//!
//! The crate ships with the four operations of a blocked Cholesky
//! factorization ([`cholesky`]), execution tracing with an offline
//! consistency checker ([`trace`], [`checker`]), and a numerical
//! verifier ([`verify`]).

pub mod checker;
pub mod cholesky;
pub mod config;
pub mod data;
pub mod dispatcher;
mod epoch;
pub mod error;
mod exec;
pub mod flowgraph;
pub mod kernels;
pub mod task;
pub mod trace;
pub mod verify;

pub use config::{parse as parse_config, preset, render as render_config};
pub use data::{create_data, DataHandle, HandleId};
pub use dispatcher::{Dispatcher, DispatcherOptions, RunStats};
pub use error::{Diagnostic, Error, Result};
pub use exec::RankMap;
pub use flowgraph::{ExecKind, FlowGraph, NodeSpec};
pub use kernels::BlockView;
pub use task::{
    AccessMode, ChildSink, Operation, OpRegistry, RunCtx, Task, TaskArg, TaskId, TaskState,
};
pub use trace::{read_trace, write_trace, TraceEvent, TRACE_HEADER};
pub use verify::{relative_residual, RESIDUAL_TOLERANCE};
