//! Threaded executor: a worker pool fed by an epoch-tracked FIFO queue.
//!
//! `submit` registers a task's arguments in the node's ledger under one
//! lock, which also serializes `submitted` trace events — the trace order
//! equals the ledger order, so epoch structure can be reconstructed from
//! the trace alone. Ready tasks enter the queue immediately (that is when
//! their `ready` event fires); parked tasks wait until a finishing task
//! releases them, in ascending id order. Workers execute whatever the task
//! needs next: a split (inline) or a kernel run.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crate::dispatcher::{ExecCtx, Runtime, TaskEntry};
use crate::error::Result;
use crate::task::{TaskId, TaskState};
use crate::trace::EventKind;

pub(crate) struct ThreadedNode {
    pos: usize,
    pub workers: usize,
    shared: Arc<Shared>,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

struct Shared {
    state: Mutex<NodeState>,
    cv: Condvar,
}

struct NodeState {
    queue: VecDeque<Arc<TaskEntry>>,
    ledger: crate::epoch::LedgerSet,
    parked: HashMap<TaskId, Arc<TaskEntry>>,
    shutdown: bool,
}

impl ThreadedNode {
    pub fn spawn(rt: &Arc<Runtime>, pos: usize, workers: Option<usize>) -> ThreadedNode {
        let workers = workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(4)
        });
        let shared = Arc::new(Shared {
            state: Mutex::new(NodeState {
                queue: VecDeque::new(),
                ledger: crate::epoch::LedgerSet::new(),
                parked: HashMap::new(),
                shutdown: false,
            }),
            cv: Condvar::new(),
        });
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let rt = Arc::clone(rt);
            let shared = Arc::clone(&shared);
            handles.push(
                std::thread::Builder::new()
                    .name(format!("worker-{pos}-{w}"))
                    .spawn(move || worker_loop(rt, shared, pos, w))
                    .expect("spawn worker"),
            );
        }
        ThreadedNode {
            pos,
            workers,
            shared,
            handles: Mutex::new(handles),
        }
    }

    pub fn submit(&self, rt: &Runtime, entry: Arc<TaskEntry>, ctx: &ExecCtx) -> Result<()> {
        let mut st = self.shared.state.lock().unwrap();
        // Register first: a failed registration must leave no trace events
        // and no ledger state behind.
        let ready = st.ledger.register(&entry.task)?;
        entry.set_state(TaskState::Submitted);
        rt.emit(
            ctx,
            self.pos,
            &entry,
            EventKind::Submitted,
            rt.args_detail(&entry.task),
        );
        if ready {
            entry.set_state(TaskState::Ready);
            rt.emit(ctx, self.pos, &entry, EventKind::Ready, String::new());
            st.queue.push_back(entry);
            drop(st);
            self.shared.cv.notify_one();
        } else {
            st.parked.insert(entry.task.id, entry);
        }
        Ok(())
    }

    /// Releases dependents of a finished task (called after its `finished`
    /// event was emitted, so release order in the trace is causal).
    pub fn task_finished(&self, rt: &Runtime, entry: &TaskEntry, ctx: &ExecCtx) {
        let mut st = self.shared.state.lock().unwrap();
        let released = st.ledger.finish(entry.task.id);
        let n = released.len();
        for tid in released {
            let e = st
                .parked
                .remove(&tid)
                .expect("released task must be parked here");
            e.set_state(TaskState::Ready);
            rt.emit(ctx, self.pos, &e, EventKind::Ready, String::new());
            st.queue.push_back(e);
        }
        drop(st);
        match n {
            0 => {}
            1 => self.shared.cv.notify_one(),
            _ => self.shared.cv.notify_all(),
        }
    }

    pub fn shutdown(&self) {
        {
            let mut st = self.shared.state.lock().unwrap();
            st.shutdown = true;
        }
        self.shared.cv.notify_all();
        for h in self.handles.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }

    pub fn dump(&self, name: &str, out: &mut String) {
        let st = self.shared.state.lock().unwrap();
        if !st.parked.is_empty() || !st.queue.is_empty() {
            out.push_str(&format!(
                "threaded node {name}: {} queued, {} parked\n",
                st.queue.len(),
                st.parked.len()
            ));
            st.ledger.dump_waiting(out);
        }
    }
}

fn worker_loop(rt: Arc<Runtime>, shared: Arc<Shared>, pos: usize, ordinal: usize) {
    let ctx = ExecCtx {
        ordinal,
        trace: rt.trace_buffer(),
    };
    loop {
        let entry = {
            let mut st = shared.state.lock().unwrap();
            loop {
                if let Some(e) = st.queue.pop_front() {
                    break e;
                }
                if st.shutdown {
                    return;
                }
                st = shared.cv.wait(st).unwrap();
            }
        };
        rt.expand_or_run(entry, pos + 1, &ctx);
    }
}
