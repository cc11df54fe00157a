//! The dispatcher: accepts root tasks, tracks their dependencies, and moves
//! tasks through the configured executor chain.
//!
//! # Execution model
//!
//! A validated flow graph is a chain of zero or more tracking nodes
//! (threaded / distsim) ending in one kernel node. The dispatcher itself is
//! the tracking point for root (level-0) tasks: it orders them with the same
//! epoch ledgers the nodes use and, when a root becomes ready, splits it and
//! routes the level-1 children to the first chain node. Each tracking node
//! does the same one level further down: a task that becomes ready either
//! *splits* (arguments still partitioned) — children go to the next chain
//! position — or *runs* at the terminal kernel node (arguments are leaves).
//!
//! Data may be partitioned deeper than the chain. A still-partitioned task
//! routed at the kernel boundary is expanded inline in the delivering
//! context, depth-first and tracked under the `dispatcher` pseudo-node: its
//! children are created and routed sequentially, so sibling order alone
//! already serializes conflicting accesses. With a single kernel node this
//! degenerates to running every leaf task in submission order — the
//! sequential baseline.
//!
//! Splits execute inline in whatever context delivered readiness (the
//! submitting thread, a worker, a rank mailbox thread); only leaf kernel
//! runs are counted as work.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock, RwLock};
use std::time::{Duration, Instant};

use crate::data::{DataHandle, HandleId};
use crate::epoch::LedgerSet;
use crate::error::{Error, Result};
use crate::exec::{kernel, ExecNode};
use crate::flowgraph::{ExecKind, FlowGraph};
use crate::kernels::BlockView;
use crate::task::{
    ChildSink, OpRegistry, Operation, RunCtx, Task, TaskArg, TaskId, TaskState, ViewResolver,
};
use crate::trace::{EventKind, TraceBuf, TraceCollector, TraceEvent};

/// Pseudo chain position for tasks tracked by the dispatcher itself.
pub(crate) const DISPATCHER_POS: usize = usize::MAX;
const DISPATCHER_NODE_NAME: &str = "dispatcher";

/// Counters kept independently of tracing.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Leaf tasks executed by the kernel node.
    pub leaf_tasks: u64,
    /// Simulated block transfers between ranks.
    pub messages: u64,
}

#[derive(Clone, Debug)]
pub struct DispatcherOptions {
    /// Record a trace of lifecycle and message events.
    pub trace: bool,
    /// `wait_all` fails if no task makes progress for this long.
    pub timeout: Duration,
}

impl Default for DispatcherOptions {
    fn default() -> Self {
        DispatcherOptions {
            trace: false,
            timeout: Duration::from_secs(30),
        }
    }
}

/// Runtime state of one task.
pub(crate) struct TaskEntry {
    pub task: Task,
    pub op: Arc<dyn Operation>,
    /// Keeps ancestors alive while descendants execute (staged-view
    /// resolution walks this chain).
    pub parent_ref: Option<Arc<TaskEntry>>,
    state: Mutex<TaskState>,
    pub pending_children: AtomicUsize,
    /// Chain position of the node tracking this task.
    node_pos: AtomicUsize,
}

impl TaskEntry {
    pub fn set_state(&self, s: TaskState) {
        *self.state.lock().unwrap() = s;
    }

    pub fn state(&self) -> TaskState {
        *self.state.lock().unwrap()
    }

    pub fn node_pos(&self) -> usize {
        self.node_pos.load(Ordering::Relaxed)
    }

    pub fn set_node_pos(&self, pos: usize) {
        self.node_pos.store(pos, Ordering::Relaxed);
    }
}

/// Per-thread execution context: trace attribution ordinal plus a private
/// trace buffer.
pub(crate) struct ExecCtx {
    pub ordinal: usize,
    pub trace: Option<TraceBuf>,
}

struct RootState {
    ledger: LedgerSet,
    outstanding: usize,
}

pub(crate) struct Runtime {
    pub registry: OpRegistry,
    node_names: Vec<String>,
    chain: OnceLock<Vec<ExecNode>>,
    pub tasks: RwLock<HashMap<TaskId, Arc<TaskEntry>>>,
    next_id: AtomicU64,
    root: Mutex<RootState>,
    root_cv: Condvar,
    failure: Mutex<Option<Error>>,
    failed: AtomicBool,
    pub collector: Option<TraceCollector>,
    program_buf: Option<TraceBuf>,
    /// Staged read buffers: level-1 consumer task → level-1 region → copy.
    pub overrides: RwLock<HashMap<TaskId, HashMap<HandleId, Arc<Vec<f64>>>>>,
    has_staging: bool,
    pub leaf_runs: AtomicU64,
    pub messages: AtomicU64,
    progress: AtomicU64,
    timeout: Duration,
    waiting: AtomicBool,
    /// Non-kernel chain length; partition depth must be at least this.
    min_depth: usize,
    /// Trace letter per matrix, assigned in order of first appearance so
    /// traces stay comparable across runs of the same program.
    tree_labels: Mutex<HashMap<u32, usize>>,
}

fn tree_letter(idx: usize) -> String {
    if idx < 26 {
        char::from(b'A' + idx as u8).to_string()
    } else {
        format!("T{idx}")
    }
}

impl Runtime {
    pub(crate) fn node(&self, pos: usize) -> &ExecNode {
        &self.chain.get().expect("dispatcher not fully configured")[pos]
    }

    fn chain_nodes(&self) -> &[ExecNode] {
        self.chain.get().map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn kernel_pos(&self) -> usize {
        self.node_names.len() - 1
    }

    pub(crate) fn node_name(&self, pos: usize) -> &str {
        if pos == DISPATCHER_POS {
            DISPATCHER_NODE_NAME
        } else {
            &self.node_names[pos]
        }
    }

    pub(crate) fn trace_buffer(&self) -> Option<TraceBuf> {
        self.collector.as_ref().map(|c| c.buffer())
    }

    /// Region token for trace details: `B(1,0)` names block (1,0) of the
    /// second matrix this run has touched.
    pub(crate) fn region_token(&self, h: &DataHandle) -> String {
        let mut map = self.tree_labels.lock().unwrap();
        let next = map.len();
        let idx = *map.entry(h.id().tree).or_insert(next);
        drop(map);
        let (i, j) = h.block_coords();
        format!("{}({i},{j})", tree_letter(idx))
    }

    /// Trace rendering of a task's argument list, e.g. `A(0,0):RW A(1,0):R`.
    pub(crate) fn args_detail(&self, task: &Task) -> String {
        let mut s = String::new();
        for (i, arg) in task.args.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&self.region_token(&arg.handle));
            s.push(':');
            s.push_str(arg.mode.token());
        }
        s
    }

    fn program_ctx(&self) -> ExecCtx {
        ExecCtx {
            ordinal: 0,
            trace: self.program_buf.clone(),
        }
    }

    pub(crate) fn emit(
        &self,
        ctx: &ExecCtx,
        pos: usize,
        entry: &TaskEntry,
        kind: EventKind,
        detail: String,
    ) {
        self.emit_at(ctx, ctx.ordinal, pos, entry, kind, detail);
    }

    /// Emit with an explicit context ordinal (the distsim node attributes
    /// submissions to the assigned rank, not the routing thread).
    pub(crate) fn emit_at(
        &self,
        ctx: &ExecCtx,
        ordinal: usize,
        pos: usize,
        entry: &TaskEntry,
        kind: EventKind,
        detail: String,
    ) {
        if let Some(buf) = &ctx.trace {
            let t = &entry.task;
            buf.emit(
                self.node_name(pos),
                ordinal,
                t.id as i64,
                t.parent.map(|p| p as i64).unwrap_or(-1),
                &t.op,
                t.level as i64,
                kind,
                detail,
            );
        }
    }

    /// Records a simulated block transfer (always counted; traced when
    /// tracing is on).
    pub(crate) fn emit_message(
        &self,
        ctx: &ExecCtx,
        pos: usize,
        src: usize,
        dst: usize,
        handle: &DataHandle,
        epoch: usize,
    ) {
        self.messages.fetch_add(1, Ordering::Relaxed);
        if let Some(buf) = &ctx.trace {
            buf.emit(
                self.node_name(pos),
                src,
                -1,
                -1,
                "-",
                handle.level() as i64,
                EventKind::Message,
                format!("{src}->{dst},{},{epoch}", self.region_token(handle)),
            );
        }
    }

    pub(crate) fn record_failure(&self, err: Error) {
        let mut slot = self.failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        self.failed.store(true, Ordering::Release);
        self.progress.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn has_failure(&self) -> bool {
        self.failed.load(Ordering::Acquire)
    }

    fn new_entry(
        &self,
        op_name: &str,
        parent: Option<&Arc<TaskEntry>>,
        level: usize,
        args: Vec<TaskArg>,
    ) -> Result<Arc<TaskEntry>> {
        let op = self.registry.get(op_name)?;
        for arg in &args {
            if arg.handle.level() != level {
                return Err(Error::Usage(format!(
                    "level-{level} task {op_name:?} references a level-{} region",
                    arg.handle.level()
                )));
            }
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let task = Task::new(
            id,
            Arc::from(op_name),
            parent.map(|p| p.task.id),
            level,
            args,
        );
        let entry = Arc::new(TaskEntry {
            task,
            op,
            parent_ref: parent.cloned(),
            state: Mutex::new(TaskState::Created),
            pending_children: AtomicUsize::new(0),
            node_pos: AtomicUsize::new(DISPATCHER_POS),
        });
        self.tasks.write().unwrap().insert(id, Arc::clone(&entry));
        Ok(entry)
    }

    pub(crate) fn task(&self, id: TaskId) -> Arc<TaskEntry> {
        Arc::clone(
            self.tasks
                .read()
                .unwrap()
                .get(&id)
                .expect("task must be live"),
        )
    }

    /// A task became ready at its tracking point: split it (children routed
    /// to `child_pos`) or, if its arguments are leaves, run it at the
    /// kernel node.
    pub(crate) fn expand_or_run(&self, entry: Arc<TaskEntry>, child_pos: usize, ctx: &ExecCtx) {
        if entry.task.is_leaf() {
            kernel::run_leaf(self, self.kernel_pos(), entry, ctx);
        } else {
            self.split_and_route(entry, child_pos, ctx);
        }
    }

    fn split_and_route(&self, entry: Arc<TaskEntry>, child_pos: usize, ctx: &ExecCtx) {
        entry.set_state(TaskState::Running);
        let mut sink = CollectSink {
            rt: self,
            parent: &entry,
            children: Vec::new(),
        };
        if let Err(e) = entry.op.clone().split(&entry.task, &mut sink) {
            // Discard whatever children were created before the error.
            let mut table = self.tasks.write().unwrap();
            for c in &sink.children {
                table.remove(&c.task.id);
            }
            drop(table);
            self.record_failure(e);
            self.finish_task(entry, ctx);
            return;
        }
        let children = sink.children;
        if children.is_empty() {
            self.finish_task(entry, ctx);
            return;
        }
        // All children exist (consecutive ids, pending count fixed) before
        // any of them is routed — a child may finish inside its route call.
        entry
            .pending_children
            .store(children.len(), Ordering::Release);
        entry.set_state(TaskState::AwaitingChildren);
        for child in children {
            if let Err(e) = self.route_child(Arc::clone(&child), child_pos, ctx) {
                // Routing failures (e.g. a write not placeable on a rank)
                // poison the run, but the child must still finish so that
                // parent counts unwind and wait_all returns.
                self.record_failure(e);
                self.finish_task(child, ctx);
            }
        }
    }

    fn route_child(&self, entry: Arc<TaskEntry>, pos: usize, ctx: &ExecCtx) -> Result<()> {
        match self.node(pos) {
            ExecNode::Threaded(t) => {
                entry.set_node_pos(pos);
                let r = t.submit(self, Arc::clone(&entry), ctx);
                if r.is_err() {
                    // Not registered anywhere: the forced finish must not
                    // touch the node's ledger.
                    entry.set_node_pos(DISPATCHER_POS);
                }
                r
            }
            ExecNode::Distsim(d) => {
                entry.set_node_pos(pos);
                let r = d.submit(self, Arc::clone(&entry), ctx);
                if r.is_err() {
                    entry.set_node_pos(DISPATCHER_POS);
                }
                r
            }
            ExecNode::Kernel(_) => {
                if entry.task.is_leaf() {
                    entry.set_node_pos(pos);
                    entry.set_state(TaskState::Submitted);
                    self.emit(ctx, pos, &entry, EventKind::Submitted, self.args_detail(&entry.task));
                    // Kernel nodes run immediately; readiness is implicit
                    // (no ready events at the kernel node).
                    entry.set_state(TaskState::Ready);
                    kernel::run_leaf(self, pos, entry, ctx);
                    Ok(())
                } else {
                    // Data is partitioned deeper than the chain: expand the
                    // subtree inline, tracked under the dispatcher. Sibling
                    // routing order serializes conflicting descendants.
                    entry.set_node_pos(DISPATCHER_POS);
                    entry.set_state(TaskState::Submitted);
                    self.emit(
                        ctx,
                        DISPATCHER_POS,
                        &entry,
                        EventKind::Submitted,
                        self.args_detail(&entry.task),
                    );
                    entry.set_state(TaskState::Ready);
                    self.emit(ctx, DISPATCHER_POS, &entry, EventKind::Ready, String::new());
                    self.split_and_route(entry, pos, ctx);
                    Ok(())
                }
            }
        }
    }

    fn ready_at_dispatcher(&self, entry: Arc<TaskEntry>, ctx: &ExecCtx) {
        entry.set_state(TaskState::Ready);
        self.emit(ctx, DISPATCHER_POS, &entry, EventKind::Ready, String::new());
        self.expand_or_run(entry, 0, ctx);
    }

    /// Completes a task: emits `finished`, releases dependents at its
    /// tracking point, and cascades to the parent when this was its last
    /// pending child.
    pub(crate) fn finish_task(&self, entry: Arc<TaskEntry>, ctx: &ExecCtx) {
        entry.set_state(TaskState::Finished);
        let pos = entry.node_pos();
        self.emit(ctx, pos, &entry, EventKind::Finished, String::new());
        self.progress.fetch_add(1, Ordering::Relaxed);

        if pos == DISPATCHER_POS {
            if entry.task.level == 0 {
                let released = {
                    let mut root = self.root.lock().unwrap();
                    let released = root.ledger.finish(entry.task.id);
                    root.outstanding -= 1;
                    self.root_cv.notify_all();
                    released
                };
                for tid in released {
                    let e = self.task(tid);
                    self.ready_at_dispatcher(e, ctx);
                }
            }
            // Inline-expanded tasks are serialized by construction: nothing
            // to release.
        } else {
            match self.node(pos) {
                ExecNode::Threaded(t) => t.task_finished(self, &entry, ctx),
                ExecNode::Distsim(d) => d.task_finished(self, &entry),
                ExecNode::Kernel(_) => {}
            }
        }

        if self.has_staging {
            self.overrides.write().unwrap().remove(&entry.task.id);
        }

        let parent = entry.parent_ref.clone();
        self.tasks.write().unwrap().remove(&entry.task.id);
        if let Some(p) = parent {
            if p.pending_children.fetch_sub(1, Ordering::AcqRel) == 1 {
                self.finish_task(p, ctx);
            }
        }
    }

    /// Staged-copy-aware view resolution: reads served from a staged buffer
    /// when the task's level-1 ancestor has one for the region's level-1
    /// ancestor; writes always hit the canonical region.
    fn resolve_view(&self, entry: &Arc<TaskEntry>, idx: usize) -> BlockView {
        let arg = &entry.task.args[idx];
        if arg.mode.is_write() || !self.has_staging || arg.handle.level() == 0 {
            return BlockView::of(&arg.handle);
        }
        let overrides = self.overrides.read().unwrap();
        if overrides.is_empty() {
            return BlockView::of(&arg.handle);
        }
        let region_l1 = arg.handle.ancestor_at_level(1);
        let mut cur = Some(entry);
        while let Some(e) = cur {
            if e.task.level == 1 {
                if let Some(buf) = overrides
                    .get(&e.task.id)
                    .and_then(|m| m.get(&region_l1.id()))
                {
                    let h = &arg.handle;
                    return BlockView::of_staged(
                        Arc::clone(buf),
                        region_l1.cols(),
                        h.row_offset() - region_l1.row_offset(),
                        h.col_offset() - region_l1.col_offset(),
                        h.rows(),
                        h.cols(),
                        h.row_offset(),
                        h.col_offset(),
                    );
                }
                break;
            }
            if e.task.level < 1 {
                break;
            }
            cur = e.parent_ref.as_ref();
        }
        BlockView::of(&arg.handle)
    }

    fn deadlock_report(&self) -> String {
        let mut out = String::new();
        let tasks = self.tasks.read().unwrap();
        let mut live: Vec<_> = tasks.values().collect();
        live.sort_by_key(|e| e.task.id);
        out.push_str(&format!("{} task(s) unfinished:\n", live.len()));
        for e in live.iter().take(40) {
            out.push_str(&format!(
                "  task {} {} level {} state {} tracked at {}\n",
                e.task.id,
                e.task.op,
                e.task.level,
                e.state(),
                self.node_name(e.node_pos()),
            ));
        }
        if live.len() > 40 {
            out.push_str(&format!("  ... and {} more\n", live.len() - 40));
        }
        drop(tasks);
        let root = self.root.lock().unwrap();
        if root.ledger.waiting_count() > 0 {
            out.push_str("dispatcher root ledger:\n");
            root.ledger.dump_waiting(&mut out);
        }
        drop(root);
        for (pos, node) in self.chain_nodes().iter().enumerate() {
            node.dump(self.node_name(pos), &mut out);
        }
        out
    }

    fn shutdown(&self) {
        for node in self.chain_nodes() {
            node.shutdown();
        }
    }
}

/// Resolver binding a concrete task entry to the runtime's staging state.
struct EntryResolver<'a> {
    rt: &'a Runtime,
    entry: &'a Arc<TaskEntry>,
}

impl ViewResolver for EntryResolver<'_> {
    fn resolve(&self, _task: &Task, idx: usize) -> BlockView {
        self.rt.resolve_view(self.entry, idx)
    }
}

impl Runtime {
    /// Executes a leaf task's operation with staged-copy-aware views.
    pub(crate) fn run_task(&self, entry: &Arc<TaskEntry>) -> Result<()> {
        let resolver = EntryResolver { rt: self, entry };
        let ctx = RunCtx::new(&resolver);
        entry.op.run(&entry.task, &ctx)
    }
}

struct CollectSink<'a> {
    rt: &'a Runtime,
    parent: &'a Arc<TaskEntry>,
    children: Vec<Arc<TaskEntry>>,
}

impl ChildSink for CollectSink<'_> {
    fn emit(&mut self, op: &str, args: Vec<TaskArg>) -> Result<()> {
        let level = self.parent.task.level + 1;
        if args.is_empty() {
            return Err(Error::Usage(format!(
                "split of task {} emitted a child with no arguments",
                self.parent.task.id
            )));
        }
        let child = self.rt.new_entry(op, Some(self.parent), level, args)?;
        self.children.push(child);
        Ok(())
    }
}

/// Owner of a configured executor chain. Dropping it shuts the chain down.
pub struct Dispatcher {
    rt: Arc<Runtime>,
}

impl Dispatcher {
    /// Validates `graph`, instantiates its executors and starts their
    /// threads.
    pub fn configure(graph: &FlowGraph, registry: OpRegistry) -> Result<Dispatcher> {
        Self::configure_with(graph, registry, DispatcherOptions::default())
    }

    pub fn configure_with(
        graph: &FlowGraph,
        registry: OpRegistry,
        options: DispatcherOptions,
    ) -> Result<Dispatcher> {
        let chain_idx = graph.validate()?;
        let node_names: Vec<String> = chain_idx
            .iter()
            .map(|&i| graph.nodes[i].id.clone())
            .collect();
        let has_staging = chain_idx
            .iter()
            .any(|&i| graph.nodes[i].kind == ExecKind::Distsim);
        let collector = options.trace.then(TraceCollector::new);
        let rt = Arc::new(Runtime {
            registry,
            min_depth: node_names.len() - 1,
            node_names,
            chain: OnceLock::new(),
            tasks: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(0),
            root: Mutex::new(RootState {
                ledger: LedgerSet::new(),
                outstanding: 0,
            }),
            root_cv: Condvar::new(),
            failure: Mutex::new(None),
            failed: AtomicBool::new(false),
            program_buf: collector.as_ref().map(|c| c.buffer()),
            collector,
            overrides: RwLock::new(HashMap::new()),
            has_staging,
            leaf_runs: AtomicU64::new(0),
            messages: AtomicU64::new(0),
            progress: AtomicU64::new(0),
            timeout: options.timeout,
            waiting: AtomicBool::new(false),
            tree_labels: Mutex::new(HashMap::new()),
        });
        let mut nodes = Vec::with_capacity(chain_idx.len());
        for (pos, &gi) in chain_idx.iter().enumerate() {
            nodes.push(ExecNode::instantiate(&rt, pos, &graph.nodes[gi])?);
        }
        rt.chain.set(nodes).ok().expect("chain configured once");
        Ok(Dispatcher { rt })
    }

    /// Submits a root task over level-0 regions. Returns its id; completion
    /// is observed via [`Dispatcher::wait_all`].
    pub fn submit(&self, op: &str, args: Vec<TaskArg>) -> Result<TaskId> {
        let rt = &self.rt;
        if rt.waiting.load(Ordering::Acquire) {
            return Err(Error::Usage(
                "submit while wait_all is in progress".into(),
            ));
        }
        if args.is_empty() {
            return Err(Error::Usage("root tasks need at least one argument".into()));
        }
        for arg in &args {
            if arg.handle.level() != 0 {
                return Err(Error::Usage(
                    "root tasks must reference level-0 regions".into(),
                ));
            }
            let depth = arg.handle.tree().depth();
            if depth < rt.min_depth {
                return Err(Error::Config(format!(
                    "partition depth {depth} is shallower than the {} non-kernel stage(s) \
                     of the flow graph; repartition the data or shorten the chain",
                    rt.min_depth
                )));
            }
        }
        let entry = rt.new_entry(op, None, 0, args)?;
        let ctx = rt.program_ctx();
        let ready = {
            let mut root = rt.root.lock().unwrap();
            match root.ledger.register(&entry.task) {
                Ok(r) => {
                    root.outstanding += 1;
                    entry.set_state(TaskState::Submitted);
                    rt.emit(
                        &ctx,
                        DISPATCHER_POS,
                        &entry,
                        EventKind::Submitted,
                        rt.args_detail(&entry.task),
                    );
                    r
                }
                Err(e) => {
                    rt.tasks.write().unwrap().remove(&entry.task.id);
                    return Err(e);
                }
            }
        };
        let id = entry.task.id;
        if ready {
            rt.ready_at_dispatcher(entry, &ctx);
        }
        Ok(id)
    }

    /// Blocks until every submitted task (and its descendants) finished.
    /// Returns the first recorded failure, or a deadlock-timeout error when
    /// nothing progresses for the configured window.
    pub fn wait_all(&self) -> Result<()> {
        let rt = &self.rt;
        rt.waiting.store(true, Ordering::Release);
        let result = self.wait_all_inner();
        rt.waiting.store(false, Ordering::Release);
        result
    }

    fn wait_all_inner(&self) -> Result<()> {
        let rt = &self.rt;
        let mut root = rt.root.lock().unwrap();
        let mut last = (rt.progress.load(Ordering::Relaxed), Instant::now());
        while root.outstanding > 0 {
            let (guard, _) = rt
                .root_cv
                .wait_timeout(root, Duration::from_millis(50))
                .unwrap();
            root = guard;
            let p = rt.progress.load(Ordering::Relaxed);
            if p != last.0 {
                last = (p, Instant::now());
            } else if last.1.elapsed() >= rt.timeout {
                drop(root);
                return Err(Error::DeadlockTimeout {
                    seconds: rt.timeout.as_secs_f64(),
                    report: rt.deadlock_report(),
                });
            }
        }
        drop(root);
        if let Some(err) = rt.failure.lock().unwrap().take() {
            return Err(err);
        }
        Ok(())
    }

    /// Execution counters (meaningful after `wait_all`).
    pub fn stats(&self) -> RunStats {
        RunStats {
            leaf_tasks: self.rt.leaf_runs.load(Ordering::Relaxed),
            messages: self.rt.messages.load(Ordering::Relaxed),
        }
    }

    /// Drains the recorded trace (if tracing was enabled), sorted by
    /// sequence number. Call after `wait_all`.
    pub fn take_trace(&self) -> Option<Vec<TraceEvent>> {
        self.rt.collector.as_ref().map(|c| c.drain())
    }

    /// Effective worker count of the threaded node (1 if there is none).
    pub fn workers(&self) -> usize {
        self.rt
            .chain_nodes()
            .iter()
            .find_map(|n| match n {
                ExecNode::Threaded(t) => Some(t.workers),
                _ => None,
            })
            .unwrap_or(1)
    }

    /// Effective rank count of the distsim node (1 if there is none).
    pub fn ranks(&self) -> usize {
        self.rt
            .chain_nodes()
            .iter()
            .find_map(|n| match n {
                ExecNode::Distsim(d) => Some(d.map.ranks()),
                _ => None,
            })
            .unwrap_or(1)
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        self.rt.shutdown();
    }
}
