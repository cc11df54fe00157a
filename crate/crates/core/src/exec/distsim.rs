//! Simulated-distributed executor.
//!
//! Emulates a rank-per-process runtime inside one process: `P` rank threads
//! with mailboxes, block ownership over a 2D block-cyclic rank grid,
//! owner-computes task placement, and explicit block transfers — real
//! copies, observable as `message` trace events — whenever a rank reads a
//! block it does not own.
//!
//! # Protocol
//!
//! The submit path is serialized by a node-level lock. It assigns each task
//! to the owner rank of its first read-write argument (writes to regions
//! owned by other ranks are rejected), stamps every argument with a global
//! per-handle epoch index, and mails the task to every involved rank:
//! owners of its arguments plus the assigned rank.
//!
//! Each rank thread replays the per-handle epoch structure for the handles
//! it owns (all ranks agree because indices were stamped centrally) and
//! *grants* accesses epoch by epoch as earlier epochs complete. A local
//! grant decrements the consumer's wait count directly. A remote read grant
//! copies the canonical block once per (handle, epoch, destination) and
//! mails it; the consumer rank stages the copy and serves it to every local
//! reader of that epoch. A task whose grants are all in runs its subtree on
//! the rank thread, with staged copies substituted for remote reads via the
//! runtime's override table. Writes go to the canonical block, which stays
//! valid because the next write epoch is granted only after every reader of
//! the previous epoch (remote ones included) has finished.
//!
//! Completion flows back as finish notes to the involved ranks, advancing
//! their epoch cursors. With one rank everything is local and no messages
//! are sent.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;

use crate::data::{DataHandle, HandleId};
use crate::dispatcher::{ExecCtx, Runtime, TaskEntry};
use crate::epoch::{EpochIndexer, HandleLedger};
use crate::error::{Error, Result};
use crate::task::{Task, TaskId, TaskState};
use crate::trace::EventKind;

/// Block-cyclic ownership map: block `(i, j)` belongs to rank
/// `(i mod rows) * cols + (j mod cols)` of a `rows × cols` rank grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankMap {
    grid: (usize, usize),
}

impl RankMap {
    /// Builds a map for `ranks` ranks, with an optional explicit grid whose
    /// area must equal `ranks`. The default grid is as square as possible:
    /// rows = the largest divisor of `ranks` that is at most √ranks.
    pub fn new(ranks: usize, grid: Option<(usize, usize)>) -> Result<RankMap> {
        if ranks == 0 {
            return Err(Error::Config("rank count must be at least 1".into()));
        }
        let grid = match grid {
            Some((r, c)) => {
                if r * c != ranks {
                    return Err(Error::Config(format!(
                        "rank grid {r}x{c} does not cover {ranks} rank(s)"
                    )));
                }
                (r, c)
            }
            None => Self::default_grid(ranks),
        };
        Ok(RankMap { grid })
    }

    pub fn default_grid(ranks: usize) -> (usize, usize) {
        let mut rows = 1;
        for d in 1..=ranks {
            if ranks % d == 0 && d * d <= ranks {
                rows = d;
            }
        }
        (rows, ranks / rows)
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn ranks(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Owner rank of block `(i, j)`.
    pub fn owner(&self, i: usize, j: usize) -> usize {
        (i % self.grid.0) * self.grid.1 + (j % self.grid.1)
    }

    fn owner_of(&self, handle: &DataHandle) -> usize {
        let (i, j) = handle.block_coords();
        self.owner(i, j)
    }
}

/// Rank a task executes on: the owner of its first read-write argument.
pub(crate) fn assign_rank(map: &RankMap, task: &Task) -> Result<usize> {
    task.args
        .iter()
        .find(|a| a.mode.is_write())
        .map(|a| map.owner_of(&a.handle))
        .ok_or_else(|| {
            Error::Usage(format!(
                "task {} ({}) has no read-write argument to place it on a rank",
                task.id, task.op
            ))
        })
}

enum RankMsg {
    Submit {
        entry: Arc<TaskEntry>,
        assigned: usize,
        epochs: Vec<usize>,
    },
    Payload {
        handle: HandleId,
        epoch: usize,
        data: Arc<Vec<f64>>,
    },
    FinishNote(TaskId),
    Shutdown,
}

pub(crate) struct DistsimNode {
    pos: usize,
    pub map: RankMap,
    /// Serializes submissions: trace order, epoch stamping and mailbox
    /// order all agree.
    submit_lock: Mutex<EpochIndexer>,
    senders: Vec<Sender<RankMsg>>,
    handles: Mutex<Vec<JoinHandle<()>>>,
    pending: AtomicI64,
}

impl DistsimNode {
    pub fn spawn(
        rt: &Arc<Runtime>,
        pos: usize,
        ranks: usize,
        grid: Option<(usize, usize)>,
    ) -> Result<DistsimNode> {
        let map = RankMap::new(ranks, grid)?;
        let mut senders = Vec::with_capacity(ranks);
        let mut receivers = Vec::with_capacity(ranks);
        for _ in 0..ranks {
            let (tx, rx) = mpsc::channel();
            senders.push(tx);
            receivers.push(rx);
        }
        let mut handles = Vec::with_capacity(ranks);
        for (rank, rx) in receivers.into_iter().enumerate() {
            let rt = Arc::clone(rt);
            let map = map.clone();
            let senders = senders.clone();
            handles.push(
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn(move || {
                        Rank::new(rt, pos, rank, map, senders).run(rx);
                    })
                    .expect("spawn rank"),
            );
        }
        Ok(DistsimNode {
            pos,
            map,
            submit_lock: Mutex::new(EpochIndexer::new()),
            senders,
            handles: Mutex::new(handles),
            pending: AtomicI64::new(0),
        })
    }

    pub fn submit(&self, rt: &Runtime, entry: Arc<TaskEntry>, ctx: &ExecCtx) -> Result<()> {
        let task = &entry.task;
        // Validate fully before any side effect so failures leave no
        // partial rank state behind.
        let assigned = assign_rank(&self.map, task)?;
        let mut seen = HashSet::new();
        for arg in &task.args {
            if !seen.insert(arg.handle.id()) {
                return Err(Error::Usage(format!(
                    "task {} ({}) references region {:?} more than once",
                    task.id, task.op, arg.handle
                )));
            }
            if arg.mode.is_write() {
                let owner = self.map.owner_of(&arg.handle);
                if owner != assigned {
                    let (i, j) = arg.handle.block_coords();
                    return Err(Error::Usage(format!(
                        "task {} ({}) writes block A({i},{j}) owned by rank {owner} but \
                         is assigned to rank {assigned}; all writes of a task must land \
                         on its own rank",
                        task.id, task.op
                    )));
                }
            }
        }
        let mut involved: BTreeSet<usize> = BTreeSet::new();
        involved.insert(assigned);
        for arg in &task.args {
            involved.insert(self.map.owner_of(&arg.handle));
        }

        let mut indexer = self.submit_lock.lock().unwrap();
        entry.set_state(TaskState::Submitted);
        rt.emit_at(
            ctx,
            assigned,
            self.pos,
            &entry,
            EventKind::Submitted,
            rt.args_detail(task),
        );
        let epochs: Vec<usize> = task
            .args
            .iter()
            .map(|a| indexer.assign(a.handle.id(), a.mode))
            .collect();
        self.pending.fetch_add(1, Ordering::Relaxed);
        for r in involved {
            self.senders[r]
                .send(RankMsg::Submit {
                    entry: Arc::clone(&entry),
                    assigned,
                    epochs: epochs.clone(),
                })
                .expect("rank mailbox closed");
        }
        drop(indexer);
        Ok(())
    }

    /// Routes a finished task's completion to the ranks that track it.
    pub fn task_finished(&self, _rt: &Runtime, entry: &TaskEntry) {
        let mut involved: BTreeSet<usize> = BTreeSet::new();
        for arg in &entry.task.args {
            involved.insert(self.map.owner_of(&arg.handle));
        }
        if let Ok(assigned) = assign_rank(&self.map, &entry.task) {
            involved.insert(assigned);
        }
        self.pending.fetch_sub(1, Ordering::Relaxed);
        for r in involved {
            let _ = self.senders[r].send(RankMsg::FinishNote(entry.task.id));
        }
    }

    pub fn shutdown(&self) {
        let mut handles = self.handles.lock().unwrap();
        if handles.is_empty() {
            return;
        }
        for s in &self.senders {
            let _ = s.send(RankMsg::Shutdown);
        }
        for h in handles.drain(..) {
            let _ = h.join();
        }
    }

    pub fn dump(&self, name: &str, out: &mut String) {
        let pending = self.pending.load(Ordering::Relaxed);
        if pending != 0 {
            out.push_str(&format!(
                "distsim node {name}: {pending} task(s) not yet finished\n"
            ));
        }
    }
}

/// Coordinator state for one owned handle.
struct CoordHandle {
    handle: DataHandle,
    ledger: HandleLedger,
    /// Epochs `[0, granted)` have had all their members granted.
    granted: usize,
    /// Payloads already sent, per (epoch, destination rank).
    sent: HashSet<(usize, usize)>,
}

struct KnownTask {
    entry: Arc<TaskEntry>,
    assigned: usize,
    epochs: Vec<usize>,
}

/// One simulated rank: mailbox consumer plus coordinator for the handles
/// it owns.
struct Rank {
    rt: Arc<Runtime>,
    pos: usize,
    rank: usize,
    map: RankMap,
    senders: Vec<Sender<RankMsg>>,
    ctx: ExecCtx,
    known: HashMap<TaskId, KnownTask>,
    coord: HashMap<HandleId, CoordHandle>,
    /// Arguments still ungranted, per task assigned to this rank.
    waits: HashMap<TaskId, usize>,
    /// Received block copies, per (handle, epoch).
    staged: HashMap<(HandleId, usize), Arc<Vec<f64>>>,
    /// Local tasks waiting for a payload, per (handle, epoch).
    awaiting: HashMap<(HandleId, usize), Vec<TaskId>>,
}

impl Rank {
    fn new(
        rt: Arc<Runtime>,
        pos: usize,
        rank: usize,
        map: RankMap,
        senders: Vec<Sender<RankMsg>>,
    ) -> Rank {
        let ctx = ExecCtx {
            ordinal: rank,
            trace: rt.trace_buffer(),
        };
        Rank {
            rt,
            pos,
            rank,
            map,
            senders,
            ctx,
            known: HashMap::new(),
            coord: HashMap::new(),
            waits: HashMap::new(),
            staged: HashMap::new(),
            awaiting: HashMap::new(),
        }
    }

    fn run(mut self, rx: Receiver<RankMsg>) {
        while let Ok(msg) = rx.recv() {
            match msg {
                RankMsg::Submit {
                    entry,
                    assigned,
                    epochs,
                } => self.on_submit(entry, assigned, epochs),
                RankMsg::Payload {
                    handle,
                    epoch,
                    data,
                } => self.on_payload(handle, epoch, data),
                RankMsg::FinishNote(tid) => self.on_finish(tid),
                RankMsg::Shutdown => break,
            }
        }
    }

    fn on_submit(&mut self, entry: Arc<TaskEntry>, assigned: usize, epochs: Vec<usize>) {
        let tid = entry.task.id;
        if assigned == self.rank {
            self.waits.insert(tid, entry.task.args.len());
        }
        self.known.insert(
            tid,
            KnownTask {
                entry: Arc::clone(&entry),
                assigned,
                epochs: epochs.clone(),
            },
        );
        // Coordinator role: record owned accesses and grant what the epoch
        // cursor allows.
        for (arg, &e) in entry.task.args.iter().zip(&epochs) {
            if self.map.owner_of(&arg.handle) != self.rank {
                continue;
            }
            let hid = arg.handle.id();
            let ch = self.coord.entry(hid).or_insert_with(|| CoordHandle {
                handle: arg.handle.clone(),
                ledger: HandleLedger::default(),
                granted: 0,
                sent: HashSet::new(),
            });
            ch.ledger.record_at(tid, arg.mode, e);
            if e < ch.granted {
                // Late joiner of an already-granted read group.
                self.grant(hid, e, tid);
            } else {
                self.advance_grants(hid);
            }
        }
        // Consumer role: account for remote reads (payload may already be
        // staged from a co-located earlier reader).
        if assigned == self.rank {
            for (arg, &e) in entry.task.args.iter().zip(&epochs) {
                if self.map.owner_of(&arg.handle) == self.rank {
                    continue;
                }
                let key = (arg.handle.id(), e);
                if self.staged.contains_key(&key) {
                    self.decrement(tid);
                } else {
                    self.awaiting.entry(key).or_default().push(tid);
                }
            }
            if self.waits.get(&tid) == Some(&0) {
                self.waits.remove(&tid);
                self.make_ready(tid);
            }
        }
    }

    fn on_payload(&mut self, handle: HandleId, epoch: usize, data: Arc<Vec<f64>>) {
        self.staged.insert((handle, epoch), data);
        if let Some(waiters) = self.awaiting.remove(&(handle, epoch)) {
            for tid in waiters {
                self.decrement_and_maybe_ready(tid);
            }
        }
    }

    fn on_finish(&mut self, tid: TaskId) {
        let Some(known) = self.known.remove(&tid) else {
            return;
        };
        for (arg, &e) in known.entry.task.args.iter().zip(&known.epochs) {
            if self.map.owner_of(&arg.handle) != self.rank {
                continue;
            }
            let hid = arg.handle.id();
            let ch = self.coord.get_mut(&hid).expect("owned ledger exists");
            let _ = ch.ledger.finish(e);
            self.advance_grants(hid);
        }
    }

    /// Grants every member of every newly unblocked epoch of `handle`.
    fn advance_grants(&mut self, handle: HandleId) {
        loop {
            let (epoch, members) = {
                let ch = self.coord.get_mut(&handle).expect("owned ledger exists");
                if ch.granted >= ch.ledger.len() || !ch.ledger.is_unblocked(ch.granted) {
                    return;
                }
                let e = ch.granted;
                ch.granted += 1;
                (e, ch.ledger.epoch(e).tasks.clone())
            };
            for m in members {
                self.grant(handle, epoch, m);
            }
        }
    }

    /// Delivers one epoch grant to `member`: locally by decrementing its
    /// wait count, remotely by sending the block copy (once per epoch and
    /// destination).
    fn grant(&mut self, handle: HandleId, epoch: usize, member: TaskId) {
        let m_rank = self.known[&member].assigned;
        if m_rank == self.rank {
            self.decrement_and_maybe_ready(member);
            return;
        }
        let ch = self.coord.get_mut(&handle).expect("owned ledger exists");
        if ch.sent.insert((epoch, m_rank)) {
            // Safe copy point: epochs before `epoch` are complete and the
            // next write is granted only after this whole epoch finishes.
            let data = Arc::new(ch.handle.read_region());
            let h = ch.handle.clone();
            // Trace the transfer before handing it over: the consumer's
            // `ready` must sequence after the message that enabled it.
            self.rt
                .emit_message(&self.ctx, self.pos, self.rank, m_rank, &h, epoch);
            self.senders[m_rank]
                .send(RankMsg::Payload {
                    handle,
                    epoch,
                    data,
                })
                .expect("rank mailbox closed");
        }
    }

    fn decrement(&mut self, tid: TaskId) {
        if let Some(w) = self.waits.get_mut(&tid) {
            *w -= 1;
        }
    }

    fn decrement_and_maybe_ready(&mut self, tid: TaskId) {
        let done = match self.waits.get_mut(&tid) {
            Some(w) => {
                *w -= 1;
                *w == 0
            }
            None => false,
        };
        if done {
            self.waits.remove(&tid);
            self.make_ready(tid);
        }
    }

    /// All grants are in: install staged copies for remote reads and run
    /// the task's subtree on this rank thread.
    fn make_ready(&mut self, tid: TaskId) {
        let known = &self.known[&tid];
        let entry = Arc::clone(&known.entry);
        let mut staged_views: HashMap<HandleId, Arc<Vec<f64>>> = HashMap::new();
        for (arg, &e) in entry.task.args.iter().zip(&known.epochs) {
            if self.map.owner_of(&arg.handle) != self.rank {
                let data = self
                    .staged
                    .get(&(arg.handle.id(), e))
                    .expect("granted remote read must be staged")
                    .clone();
                staged_views.insert(arg.handle.id(), data);
            }
        }
        if !staged_views.is_empty() {
            self.rt
                .overrides
                .write()
                .unwrap()
                .insert(tid, staged_views);
        }
        entry.set_state(TaskState::Ready);
        self.rt
            .emit(&self.ctx, self.pos, &entry, EventKind::Ready, String::new());
        self.rt.expand_or_run(entry, self.pos + 1, &self.ctx);
    }
}
