//! Epoch-based dependency tracking.
//!
//! Every tracking point (the dispatcher for root tasks, a threaded node, a
//! simulated-distributed coordinator) orders accesses to each region handle
//! into *epochs* in submission order: consecutive `Read` accesses coalesce
//! into one read-group epoch; each `ReadWrite` access is its own write
//! epoch. A task is ready once, on every argument, all epochs before its
//! own are complete. This yields read-sharing with exclusive writes without
//! materializing a task graph.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use crate::data::HandleId;
use crate::error::{Error, Result};
use crate::task::{AccessMode, Task, TaskId};

/// One epoch in a handle's access sequence.
#[derive(Clone, Debug)]
pub struct Epoch {
    pub mode: AccessMode,
    /// Member tasks: exactly one for a write epoch, one or more for a
    /// read group.
    pub tasks: Vec<TaskId>,
    remaining: usize,
}

impl Epoch {
    pub fn is_complete(&self) -> bool {
        self.remaining == 0
    }
}

/// Ordered epoch list for a single handle.
#[derive(Default, Debug)]
pub struct HandleLedger {
    epochs: Vec<Epoch>,
    /// Number of leading epochs that are fully complete.
    complete_prefix: usize,
}

impl HandleLedger {
    /// Appends an access, coalescing consecutive reads, and returns the
    /// epoch index the task joined.
    pub fn record(&mut self, task: TaskId, mode: AccessMode) -> usize {
        if mode == AccessMode::Read {
            if let Some(last) = self.epochs.last_mut() {
                if last.mode == AccessMode::Read {
                    last.tasks.push(task);
                    last.remaining += 1;
                    // Joining a read group whose members had all finished
                    // re-opens it: the completion frontier must retreat so
                    // a later writer waits for this member as well. Safe
                    // because only the last epoch can grow — nothing after
                    // it has been released yet.
                    let idx = self.epochs.len() - 1;
                    self.complete_prefix = self.complete_prefix.min(idx);
                    return idx;
                }
            }
        }
        self.epochs.push(Epoch {
            mode,
            tasks: vec![task],
            remaining: 1,
        });
        self.epochs.len() - 1
    }

    /// Joins an access at an externally assigned epoch index (used when an
    /// authoritative indexer has already ordered the access sequence).
    pub fn record_at(&mut self, task: TaskId, mode: AccessMode, epoch: usize) {
        if epoch == self.epochs.len() {
            self.epochs.push(Epoch {
                mode,
                tasks: vec![task],
                remaining: 1,
            });
        } else {
            assert_eq!(
                epoch + 1,
                self.epochs.len(),
                "epoch indices must arrive in order"
            );
            let last = self.epochs.last_mut().unwrap();
            assert_eq!(last.mode, AccessMode::Read, "only read groups grow");
            last.tasks.push(task);
            last.remaining += 1;
            // Same frontier retreat as `record`: a drained read group that
            // gains a member is no longer complete.
            self.complete_prefix = self.complete_prefix.min(epoch);
        }
    }

    /// All epochs before `epoch` are complete.
    pub fn is_unblocked(&self, epoch: usize) -> bool {
        epoch <= self.complete_prefix
    }

    /// Marks one member of `epoch` finished. Returns the range of epoch
    /// indices that just became unblocked (often empty).
    pub fn finish(&mut self, epoch: usize) -> std::ops::Range<usize> {
        let e = &mut self.epochs[epoch];
        assert!(e.remaining > 0, "finish on already-complete epoch");
        e.remaining -= 1;
        let old = self.complete_prefix;
        while self.complete_prefix < self.epochs.len()
            && self.epochs[self.complete_prefix].is_complete()
        {
            self.complete_prefix += 1;
        }
        if self.complete_prefix > old {
            // Epochs in (old, complete_prefix] are newly unblocked; cap at
            // existing indices.
            let hi = (self.complete_prefix + 1).min(self.epochs.len());
            (old + 1)..hi
        } else {
            0..0
        }
    }

    pub fn epoch(&self, idx: usize) -> &Epoch {
        &self.epochs[idx]
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    /// Snapshot of the epoch structure as (mode, members) pairs.
    #[cfg(test)]
    pub fn snapshot(&self) -> Vec<(AccessMode, Vec<TaskId>)> {
        self.epochs
            .iter()
            .map(|e| (e.mode, e.tasks.clone()))
            .collect()
    }
}

/// Ledger over many handles plus per-task wait counters: the full tracking
/// state one node keeps for the tasks it supervises.
#[derive(Default)]
pub struct LedgerSet {
    ledgers: HashMap<HandleId, HandleLedger>,
    /// Epoch index each (task, handle) access joined.
    accesses: HashMap<TaskId, Vec<(HandleId, usize)>>,
    /// Arguments a task is still blocked on.
    waits: HashMap<TaskId, usize>,
    /// Human-readable context per waiting task, for deadlock reports.
    labels: HashMap<TaskId, String>,
}

impl LedgerSet {
    pub fn new() -> LedgerSet {
        LedgerSet::default()
    }

    /// Registers every argument of `task`. Returns `true` when the task is
    /// immediately ready. Registering the same handle twice for one task is
    /// a usage error.
    pub fn register(&mut self, task: &Task) -> Result<bool> {
        let mut seen: HashSet<HandleId> = HashSet::new();
        for arg in &task.args {
            if !seen.insert(arg.handle.id()) {
                // Roll back nothing: callers treat this as fatal.
                return Err(Error::Usage(format!(
                    "task {} ({}) references region {:?} more than once",
                    task.id, task.op, arg.handle
                )));
            }
        }
        let mut blocked = 0;
        let mut acc = Vec::with_capacity(task.args.len());
        for arg in &task.args {
            let hid = arg.handle.id();
            let ledger = self.ledgers.entry(hid).or_default();
            let idx = ledger.record(task.id, arg.mode);
            if !ledger.is_unblocked(idx) {
                blocked += 1;
            }
            acc.push((hid, idx));
        }
        self.accesses.insert(task.id, acc);
        if blocked > 0 {
            self.waits.insert(task.id, blocked);
            self.labels
                .insert(task.id, format!("{} {}", task.op, task.args_detail()));
            Ok(false)
        } else {
            Ok(true)
        }
    }

    /// Marks `task` finished on all its arguments; returns newly ready
    /// tasks in ascending id order.
    pub fn finish(&mut self, task: TaskId) -> Vec<TaskId> {
        let accesses = self
            .accesses
            .remove(&task)
            .expect("finish on unregistered task");
        let mut ready = Vec::new();
        for (hid, epoch) in accesses {
            let ledger = self.ledgers.get_mut(&hid).expect("ledger must exist");
            let unblocked = ledger.finish(epoch);
            for e in unblocked {
                for &member in &ledger.epoch(e).tasks {
                    if let Entry::Occupied(mut w) = self.waits.entry(member) {
                        *w.get_mut() -= 1;
                        if *w.get() == 0 {
                            w.remove();
                            self.labels.remove(&member);
                            ready.push(member);
                        }
                    }
                }
            }
        }
        ready.sort_unstable();
        ready
    }

    /// Epoch snapshot for one handle.
    #[cfg(test)]
    pub fn snapshot(&self, handle: HandleId) -> Vec<(AccessMode, Vec<TaskId>)> {
        self.ledgers
            .get(&handle)
            .map(|l| l.snapshot())
            .unwrap_or_default()
    }

    pub fn waiting_count(&self) -> usize {
        self.waits.len()
    }

    /// One line per waiting task, for deadlock reports.
    pub fn dump_waiting(&self, out: &mut String) {
        let mut ids: Vec<_> = self.waits.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            let label = self.labels.get(&id).map(String::as_str).unwrap_or("?");
            out.push_str(&format!(
                "  task {id} [{label}] waiting on {} argument(s)\n",
                self.waits[&id]
            ));
        }
    }
}

/// Assigns global epoch indices without tracking completion. The
/// simulated-distributed node uses one of these in its (serialized) submit
/// path so every rank sees identical epoch numbering.
#[derive(Default)]
pub struct EpochIndexer {
    seqs: HashMap<HandleId, (AccessMode, usize)>,
}

impl EpochIndexer {
    pub fn new() -> EpochIndexer {
        EpochIndexer::default()
    }

    /// Epoch index this access joins, applying the same coalescing rule as
    /// [`HandleLedger::record`].
    pub fn assign(&mut self, handle: HandleId, mode: AccessMode) -> usize {
        match self.seqs.entry(handle) {
            Entry::Vacant(v) => {
                v.insert((mode, 0));
                0
            }
            Entry::Occupied(mut o) => {
                let (last_mode, last_idx) = *o.get();
                if mode == AccessMode::Read && last_mode == AccessMode::Read {
                    last_idx
                } else {
                    o.insert((mode, last_idx + 1));
                    last_idx + 1
                }
            }
        }
    }
}
