//! Generic task descriptors and the operation protocol.
//!
//! A task is an operation name plus argument handles, each tagged with an
//! access mode. Operations implement [`Operation`]: `split` rewrites a task
//! over partitioned regions into child tasks over the regions one level
//! down, and `run` executes a task whose arguments are leaf regions. The
//! runtime decides which of the two is invoked where; an operation never
//! schedules anything itself.

use std::collections::HashMap;
use std::sync::Arc;

use crate::data::DataHandle;
use crate::error::{Error, Result};
use crate::kernels::BlockView;

/// Monotonically increasing task identifier, unique within a process.
pub type TaskId = u64;

/// How a task touches an argument region.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum AccessMode {
    Read,
    ReadWrite,
}

impl AccessMode {
    /// Short token used in traces: `R` or `RW`.
    pub fn token(self) -> &'static str {
        match self {
            AccessMode::Read => "R",
            AccessMode::ReadWrite => "RW",
        }
    }

    pub fn is_write(self) -> bool {
        matches!(self, AccessMode::ReadWrite)
    }
}

/// One argument of a task: a region handle plus its access mode.
#[derive(Clone, Debug)]
pub struct TaskArg {
    pub handle: DataHandle,
    pub mode: AccessMode,
}

impl TaskArg {
    pub fn read(handle: DataHandle) -> TaskArg {
        TaskArg {
            handle,
            mode: AccessMode::Read,
        }
    }

    pub fn read_write(handle: DataHandle) -> TaskArg {
        TaskArg {
            handle,
            mode: AccessMode::ReadWrite,
        }
    }
}

/// Lifecycle states. `Running` covers both split and kernel execution;
/// `AwaitingChildren` is entered by tasks that split and is left when the
/// last child finishes.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum TaskState {
    Created,
    Submitted,
    Ready,
    Running,
    AwaitingChildren,
    Finished,
}

impl std::fmt::Display for TaskState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskState::Created => "created",
            TaskState::Submitted => "submitted",
            TaskState::Ready => "ready",
            TaskState::Running => "running",
            TaskState::AwaitingChildren => "awaiting-children",
            TaskState::Finished => "finished",
        };
        f.write_str(s)
    }
}

/// Immutable task descriptor handed to operations.
///
/// `level` equals the partition level of every argument handle: a level-L
/// task references level-L regions, and splitting produces level-L+1 tasks.
#[derive(Clone, Debug)]
#[non_exhaustive]
pub struct Task {
    pub id: TaskId,
    pub op: Arc<str>,
    pub parent: Option<TaskId>,
    pub level: usize,
    pub args: Vec<TaskArg>,
}

impl Task {
    pub(crate) fn new(
        id: TaskId,
        op: Arc<str>,
        parent: Option<TaskId>,
        level: usize,
        args: Vec<TaskArg>,
    ) -> Task {
        Task {
            id,
            op,
            parent,
            level,
            args,
        }
    }

    /// Trace rendering of the argument list, e.g. `A(0,0):RW A(1,0):R`.
    /// Coordinates are block positions at the task's level.
    pub fn args_detail(&self) -> String {
        let mut s = String::new();
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let (bi, bj) = arg.handle.block_coords();
            s.push_str(&format!("A({bi},{bj}):{}", arg.mode.token()));
        }
        s
    }

    /// True when every argument is a leaf region (no further partitions).
    pub fn is_leaf(&self) -> bool {
        self.args.iter().all(|a| a.handle.is_leaf())
    }
}

/// Receives child tasks emitted by [`Operation::split`]. Emission order is
/// preserved and determines child task identifiers.
pub trait ChildSink {
    fn emit(&mut self, op: &str, args: Vec<TaskArg>) -> Result<()>;
}

/// Resolves a task argument to the view a kernel should operate on. The
/// runtime substitutes staged copies for remote reads here; writes always
/// resolve to the canonical region.
pub(crate) trait ViewResolver: Sync {
    fn resolve(&self, task: &Task, idx: usize) -> BlockView;
}

/// Canonical resolution: every argument maps to its own region.
pub(crate) struct CanonicalResolver;

impl ViewResolver for CanonicalResolver {
    fn resolve(&self, task: &Task, idx: usize) -> BlockView {
        BlockView::of(&task.args[idx].handle)
    }
}

static CANONICAL: CanonicalResolver = CanonicalResolver;

/// Execution context handed to [`Operation::run`].
pub struct RunCtx<'a> {
    resolver: &'a dyn ViewResolver,
}

impl<'a> RunCtx<'a> {
    pub(crate) fn new(resolver: &'a dyn ViewResolver) -> RunCtx<'a> {
        RunCtx { resolver }
    }

    /// Context that resolves every argument to its canonical region
    /// (useful for driving kernels directly in tests).
    pub fn canonical() -> RunCtx<'static> {
        RunCtx {
            resolver: &CANONICAL,
        }
    }

    /// View for argument `idx` of `task`. Panics if `idx` is out of range;
    /// operations only index their own argument lists.
    pub fn view(&self, task: &Task, idx: usize) -> BlockView {
        assert!(idx < task.args.len(), "argument index out of range");
        self.resolver.resolve(task, idx)
    }
}

/// A named operation understood by the runtime.
pub trait Operation: Send + Sync {
    /// Registry name; task descriptors refer to operations by this name.
    fn name(&self) -> &str;

    /// Rewrites `task` (whose arguments are partitioned regions) into child
    /// tasks over regions one level down, emitted in dependency-respecting
    /// order into `sink`.
    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<()>;

    /// Executes `task` on leaf regions, resolving argument views through
    /// `ctx`.
    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<()>;
}

/// Name → operation table consulted by the dispatcher.
#[derive(Clone, Default)]
pub struct OpRegistry {
    ops: HashMap<String, Arc<dyn Operation>>,
}

impl OpRegistry {
    pub fn new() -> OpRegistry {
        OpRegistry::default()
    }

    pub fn register(&mut self, op: Arc<dyn Operation>) -> Result<()> {
        let name = op.name().to_string();
        if self.ops.contains_key(&name) {
            return Err(Error::Usage(format!(
                "operation {name:?} is already registered"
            )));
        }
        self.ops.insert(name, op);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Operation>> {
        self.ops
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownOp(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ops.contains_key(name)
    }
}
