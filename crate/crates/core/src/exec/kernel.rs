//! Kernel executor: runs leaf tasks synchronously in the delivering
//! context. It keeps no queue and no ledger — ordering is entirely the
//! responsibility of whichever node (or inline expansion) delivered the
//! task, which is why kernel nodes never emit `ready` events.

use std::sync::Arc;
use std::sync::atomic::Ordering;

use crate::dispatcher::{ExecCtx, Runtime, TaskEntry};
use crate::task::TaskState;
use crate::trace::EventKind;

pub(crate) struct KernelNode;

/// Executes a leaf task at the kernel node (`pos`). `run_start`/`run_end`
/// are attributed to the kernel node; the `finished` event goes to the
/// node that tracks the task. After a failure has been recorded the
/// execution is skipped so the remaining task graph drains quickly, but
/// the lifecycle still completes.
pub(crate) fn run_leaf(rt: &Runtime, pos: usize, entry: Arc<TaskEntry>, ctx: &ExecCtx) {
    entry.set_state(TaskState::Running);
    rt.emit(ctx, pos, &entry, EventKind::RunStart, String::new());
    let skipped = rt.has_failure();
    let result = if skipped { Ok(()) } else { rt.run_task(&entry) };
    rt.emit(ctx, pos, &entry, EventKind::RunEnd, String::new());
    match result {
        Ok(()) => {
            if !skipped {
                rt.leaf_runs.fetch_add(1, Ordering::Relaxed);
            }
        }
        Err(e) => rt.record_failure(e),
    }
    rt.finish_task(entry, ctx);
}
