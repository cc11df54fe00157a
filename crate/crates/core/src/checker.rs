//! Trace validation.
//!
//! Checks that a recorded trace is consistent with the runtime's contract:
//! task lifecycles are well-formed, parent/child causality holds, per-node
//! epoch ordering was respected, and — for simulated-distributed runs —
//! block transfers are exactly the necessary ones, sent by the owning rank
//! before the consuming rank's task became ready.
//!
//! Everything is reconstructed from the trace alone. Per-node epoch
//! structure is replayed from `submitted` order (which the runtime
//! guarantees equals ledger order); ownership is recovered from the
//! writer contexts of each block. Blocks that are never written cannot be
//! attributed to an owner from the trace, so transfer necessity is not
//! judged for them (duplicate and self-send checks still apply).

use std::collections::{HashMap, HashSet};

use crate::trace::{EventKind, TraceEvent};

/// One detected inconsistency.
#[derive(Debug, Clone)]
pub struct Violation {
    /// Task the problem is attached to, if any.
    pub task: Option<i64>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.task {
            Some(t) => write!(f, "task {t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Region key within one node's reconstruction: (level, region name). The
/// name is taken verbatim from the trace (e.g. `A(0,0)`, `B(1,0)`); distinct
/// matrices carry distinct letters, so the string identifies the block.
type BlockKey = (i64, String);

#[derive(Clone, PartialEq, Eq, Debug)]
struct ArgRef {
    region: String,
    write: bool,
}

/// Parses `A(0,0):R B(1,0):RW` argument details.
fn parse_args(detail: &str) -> Option<Vec<ArgRef>> {
    if detail.is_empty() {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    for tok in detail.split(' ') {
        let (region, mode) = tok.rsplit_once(':')?;
        let write = match mode {
            "R" => false,
            "RW" => true,
            _ => return None,
        };
        if !region.contains('(') || !region.ends_with(')') {
            return None;
        }
        out.push(ArgRef {
            region: region.to_string(),
            write,
        });
    }
    Some(out)
}

#[derive(Debug, PartialEq, Eq, Clone)]
struct MessageRef {
    src: usize,
    dst: usize,
    block: String,
    epoch: usize,
    seq: u64,
}

/// Parses `src->dst,A(i,j),epoch` message details. The block name itself
/// contains a comma, so split the route off the front and the epoch off the
/// back.
fn parse_message(e: &TraceEvent) -> Option<MessageRef> {
    let (route, rest) = e.detail.split_once(',')?;
    let (block, epoch) = rest.rsplit_once(',')?;
    let (src, dst) = route.split_once("->")?;
    if !block.contains('(') || !block.ends_with(')') {
        return None;
    }
    Some(MessageRef {
        src: src.parse().ok()?,
        dst: dst.parse().ok()?,
        block: block.to_string(),
        epoch: epoch.parse().ok()?,
        seq: e.seq,
    })
}

/// Per-task digest of lifecycle events.
#[derive(Default)]
struct TaskDigest {
    submitted: Vec<u64>,
    submitted_node: String,
    submitted_ctx: usize,
    args: Option<Vec<ArgRef>>,
    ready: Vec<u64>,
    run_start: Vec<u64>,
    run_end: Vec<u64>,
    run_node: String,
    finished: Vec<u64>,
    parent: i64,
    level: i64,
    children: Vec<i64>,
}

/// Epoch list replayed for one block at one node: (is_write, member tasks).
type EpochList = Vec<(bool, Vec<i64>)>;

/// Validates `events` (already ordered by `seq`). Returns the list of
/// violations; an empty list means the trace is consistent.
pub fn check(events: &[TraceEvent]) -> Vec<Violation> {
    let mut v: Vec<Violation> = Vec::new();

    // 0. Global sequence sanity.
    for w in events.windows(2) {
        if w[0].seq >= w[1].seq {
            v.push(Violation {
                task: None,
                message: format!(
                    "trace not strictly ordered by seq at {} -> {}",
                    w[0].seq, w[1].seq
                ),
            });
            break;
        }
    }

    // 1. Collect per-task digests.
    let mut tasks: HashMap<i64, TaskDigest> = HashMap::new();
    for e in events {
        if e.kind == EventKind::Message {
            continue;
        }
        if e.task < 0 {
            v.push(Violation {
                task: None,
                message: format!("lifecycle event at seq {} has no task id", e.seq),
            });
            continue;
        }
        let d = tasks.entry(e.task).or_default();
        match e.kind {
            EventKind::Submitted => {
                d.submitted.push(e.seq);
                d.submitted_node = e.node.clone();
                d.submitted_ctx = e.ctx;
                d.parent = e.parent;
                d.level = e.level;
                d.args = parse_args(&e.detail);
                if d.args.is_none() {
                    v.push(Violation {
                        task: Some(e.task),
                        message: format!("unparseable args {:?}", e.detail),
                    });
                }
            }
            EventKind::Ready => d.ready.push(e.seq),
            EventKind::RunStart => {
                d.run_start.push(e.seq);
                d.run_node = e.node.clone();
            }
            EventKind::RunEnd => d.run_end.push(e.seq),
            EventKind::Finished => d.finished.push(e.seq),
            EventKind::Message => unreachable!(),
        }
    }
    for (&id, d) in &tasks {
        if d.submitted.len() != 1 {
            v.push(Violation {
                task: Some(id),
                message: format!("{} submitted events", d.submitted.len()),
            });
        }
        if d.finished.len() != 1 {
            v.push(Violation {
                task: Some(id),
                message: format!("{} finished events", d.finished.len()),
            });
        }
        if d.ready.len() > 1 {
            v.push(Violation {
                task: Some(id),
                message: format!("{} ready events", d.ready.len()),
            });
        }
        if d.run_start.len() > 1 || d.run_start.len() != d.run_end.len() {
            v.push(Violation {
                task: Some(id),
                message: format!(
                    "unbalanced run events ({} start, {} end)",
                    d.run_start.len(),
                    d.run_end.len()
                ),
            });
        }
        // Ordering over whichever lifecycle events exist.
        let mut chain: Vec<(u64, &str)> = Vec::new();
        if let Some(&s) = d.submitted.first() {
            chain.push((s, "submitted"));
        }
        if let Some(&s) = d.ready.first() {
            chain.push((s, "ready"));
        }
        if let Some(&s) = d.run_start.first() {
            chain.push((s, "run_start"));
        }
        if let Some(&s) = d.run_end.first() {
            chain.push((s, "run_end"));
        }
        if let Some(&s) = d.finished.first() {
            chain.push((s, "finished"));
        }
        for w in chain.windows(2) {
            if w[0].0 >= w[1].0 {
                v.push(Violation {
                    task: Some(id),
                    message: format!(
                        "{} (seq {}) not before {} (seq {})",
                        w[0].1, w[0].0, w[1].1, w[1].0
                    ),
                });
            }
        }
    }

    // 2. Parent/child relations.
    let ids: Vec<i64> = tasks.keys().copied().collect();
    for id in ids {
        let (parent, level, submitted, finished) = {
            let d = &tasks[&id];
            (
                d.parent,
                d.level,
                d.submitted.first().copied(),
                d.finished.first().copied(),
            )
        };
        if parent < 0 {
            continue;
        }
        let Some(p) = tasks.get(&parent) else {
            v.push(Violation {
                task: Some(id),
                message: format!("parent {parent} has no events"),
            });
            continue;
        };
        if p.level + 1 != level {
            v.push(Violation {
                task: Some(id),
                message: format!("level {level} but parent {parent} has level {}", p.level),
            });
        }
        match (p.ready.first(), submitted) {
            (Some(&pr), Some(s)) if pr < s => {}
            (Some(&pr), Some(s)) => v.push(Violation {
                task: Some(id),
                message: format!("submitted (seq {s}) before parent became ready (seq {pr})"),
            }),
            (None, _) => v.push(Violation {
                task: Some(id),
                message: format!("parent {parent} split without a ready event"),
            }),
            _ => {}
        }
        match (p.finished.first(), finished) {
            (Some(&pf), Some(f)) if f < pf => {}
            (Some(&pf), Some(f)) => v.push(Violation {
                task: Some(id),
                message: format!("finished (seq {f}) after parent finished (seq {pf})"),
            }),
            _ => {}
        }
        tasks.get_mut(&parent).unwrap().children.push(id);
    }

    // 3. Split xor run; only kernel-direct tasks may lack a ready event,
    // and no node hosts both run and ready events.
    let mut ready_nodes: HashSet<String> = HashSet::new();
    let mut run_nodes: HashSet<String> = HashSet::new();
    for (&id, d) in &tasks {
        if !d.children.is_empty() && !d.run_start.is_empty() {
            v.push(Violation {
                task: Some(id),
                message: "both split into children and ran".to_string(),
            });
        }
        if !d.ready.is_empty() {
            ready_nodes.insert(d.submitted_node.clone());
        }
        if !d.run_start.is_empty() {
            run_nodes.insert(d.run_node.clone());
        }
        let kernel_direct = !d.run_start.is_empty() && d.submitted_node == d.run_node;
        if d.ready.is_empty() && !kernel_direct {
            v.push(Violation {
                task: Some(id),
                message: format!("no ready event but tracked at {:?}", d.submitted_node),
            });
        }
    }
    for n in &run_nodes {
        if ready_nodes.contains(n) {
            v.push(Violation {
                task: None,
                message: format!("node {n:?} hosts both run and ready events"),
            });
        }
    }

    // 4. Per-node epoch ordering: replay epochs from submitted order and
    // require each tracked task's ready to come after every member of every
    // earlier epoch on each of its blocks has finished.
    let mut per_node: HashMap<String, HashMap<BlockKey, EpochList>> = HashMap::new();
    for e in events {
        if e.kind != EventKind::Submitted {
            continue;
        }
        let d = &tasks[&e.task];
        if d.ready.is_empty() {
            continue; // kernel-direct: ordering is the deliverer's duty
        }
        let Some(args) = &d.args else { continue };
        let blocks = per_node.entry(d.submitted_node.clone()).or_default();
        for a in args {
            let key: BlockKey = (d.level, a.region.clone());
            let epochs = blocks.entry(key).or_default();
            match epochs.last_mut() {
                Some((false, members)) if !a.write => members.push(e.task),
                _ => epochs.push((a.write, vec![e.task])),
            }
        }
    }
    for (node, blocks) in &per_node {
        for (key, epochs) in blocks {
            // prefix_max[e] = latest finished seq among members of epochs
            // 0..=e (u64::MAX when a member never finished; the per-task
            // checks already flagged that case).
            let mut prefix_max: Vec<u64> = Vec::with_capacity(epochs.len());
            let mut running = 0u64;
            for (_, members) in epochs {
                for m in members {
                    let f = tasks[m].finished.first().copied().unwrap_or(u64::MAX);
                    running = running.max(f);
                }
                prefix_max.push(running);
            }
            for (eidx, (_, members)) in epochs.iter().enumerate().skip(1) {
                for m in members {
                    let Some(&ready) = tasks[m].ready.first() else {
                        continue;
                    };
                    if prefix_max[eidx - 1] >= ready {
                        v.push(Violation {
                            task: Some(*m),
                            message: format!(
                                "ready (seq {ready}) before an earlier access epoch of \
                                 {} at level {} completed on node {node:?}",
                                key.1, key.0
                            ),
                        });
                    }
                }
            }
        }
    }

    // 5. Block-transfer discipline. Transfers are attributed to the node
    // that emitted them; readers at that node are matched against the
    // replayed epochs.
    let mut transfers_by_node: HashMap<String, Vec<MessageRef>> = HashMap::new();
    for e in events {
        if e.kind != EventKind::Message {
            continue;
        }
        match parse_message(e) {
            Some(m) => {
                if m.src != e.ctx {
                    v.push(Violation {
                        task: None,
                        message: format!(
                            "transfer at seq {} recorded from context {} but names source {}",
                            e.seq, e.ctx, m.src
                        ),
                    });
                }
                transfers_by_node.entry(e.node.clone()).or_default().push(m);
            }
            None => v.push(Violation {
                task: None,
                message: format!("unparseable transfer detail {:?} at seq {}", e.detail, e.seq),
            }),
        }
    }
    for (node, transfers) in &transfers_by_node {
        let empty = HashMap::new();
        let blocks = per_node.get(node).unwrap_or(&empty);

        // Recover each block's owner from writer contexts.
        let mut owner: HashMap<&BlockKey, Option<usize>> = HashMap::new();
        for (key, epochs) in blocks {
            let mut ranks: HashSet<usize> = HashSet::new();
            for (is_write, members) in epochs {
                if *is_write {
                    for m in members {
                        ranks.insert(tasks[m].submitted_ctx);
                    }
                }
            }
            if ranks.len() > 1 {
                v.push(Violation {
                    task: None,
                    message: format!(
                        "block {} at level {} written from {} different ranks on \
                         node {node:?}",
                        key.1,
                        key.0,
                        ranks.len()
                    ),
                });
            }
            owner.insert(key, ranks.into_iter().next());
        }

        // Duplicate and self-send checks over observed transfers.
        let mut seen: HashMap<(&str, usize, usize), u64> = HashMap::new();
        for t in transfers {
            if t.src == t.dst {
                v.push(Violation {
                    task: None,
                    message: format!(
                        "self-transfer of {} epoch {} on rank {}",
                        t.block, t.epoch, t.src
                    ),
                });
            }
            if let Some(prev) = seen.insert((t.block.as_str(), t.epoch, t.dst), t.seq) {
                v.push(Violation {
                    task: None,
                    message: format!(
                        "duplicate transfer of {} epoch {} to rank {} (seq {prev} and {})",
                        t.block, t.epoch, t.dst, t.seq
                    ),
                });
            }
        }

        // Necessity and sufficiency: every remote read must be served by
        // exactly one earlier transfer, and every transfer must serve some
        // remote read.
        let mut used: HashSet<(&str, usize, usize)> = HashSet::new();
        for (key, epochs) in blocks {
            let Some(Some(own)) = owner.get(key) else {
                continue; // never written: owner unknowable from the trace
            };
            for (eidx, (is_write, members)) in epochs.iter().enumerate() {
                if *is_write {
                    continue;
                }
                for m in members {
                    let d = &tasks[m];
                    if d.submitted_ctx == *own {
                        continue; // local read
                    }
                    let sig = (key.1.as_str(), eidx, d.submitted_ctx);
                    match seen.get(&sig) {
                        None => v.push(Violation {
                            task: Some(*m),
                            message: format!(
                                "reads {} epoch {eidx} on rank {} but no transfer \
                                 from owner rank {own} was recorded",
                                key.1, d.submitted_ctx
                            ),
                        }),
                        Some(&mseq) => {
                            used.insert(sig);
                            if let Some(&ready) = d.ready.first() {
                                if mseq >= ready {
                                    v.push(Violation {
                                        task: Some(*m),
                                        message: format!(
                                            "ready (seq {ready}) before the transfer of \
                                             {} epoch {eidx} arrived (seq {mseq})",
                                            key.1
                                        ),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        for t in transfers {
            let key: &BlockKey = match blocks.keys().find(|k| k.1 == t.block) {
                Some(k) => k,
                None => {
                    v.push(Violation {
                        task: None,
                        message: format!(
                            "transfer of unknown block {} on node {node:?}",
                            t.block
                        ),
                    });
                    continue;
                }
            };
            let sig = (t.block.as_str(), t.epoch, t.dst);
            let epochs = &blocks[key];
            if t.epoch >= epochs.len() || epochs[t.epoch].0 {
                v.push(Violation {
                    task: None,
                    message: format!(
                        "transfer of {} names epoch {} which is not a read epoch",
                        t.block, t.epoch
                    ),
                });
                continue;
            }
            if owner.get(key).copied().flatten().is_some() && !used.contains(&sig) {
                v.push(Violation {
                    task: None,
                    message: format!(
                        "transfer of {} epoch {} to rank {} serves no remote reader",
                        t.block, t.epoch, t.dst
                    ),
                });
            }
            if let Some(Some(own)) = owner.get(key) {
                if t.src != *own {
                    v.push(Violation {
                        task: None,
                        message: format!(
                            "transfer of {} epoch {} sent by rank {} but the block \
                             is owned by rank {}",
                            t.block, t.epoch, t.src, own
                        ),
                    });
                }
            }
        }
    }

    v.sort_by(|a, b| a.task.unwrap_or(-1).cmp(&b.task.unwrap_or(-1)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::read_trace;

    fn trace(lines: &[&str]) -> Vec<TraceEvent> {
        let mut body = String::from(crate::trace::TRACE_HEADER);
        body.push('\n');
        for l in lines {
            body.push_str(l);
            body.push('\n');
        }
        read_trace(&body).expect("test trace parses")
    }

    /// Minimal valid trace: one root splits into one leaf that runs.
    fn valid_lines() -> Vec<String> {
        vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW".into(),
            "1,11,dispatcher,0,0,-1,fact,0,ready,-".into(),
            "2,12,sg,0,1,0,fact,1,submitted,A(0,0):RW".into(),
            "3,13,sg,0,1,0,fact,1,ready,-".into(),
            "4,14,kern,1,1,0,fact,1,run_start,-".into(),
            "5,15,kern,1,1,0,fact,1,run_end,-".into(),
            "6,16,sg,1,1,0,fact,1,finished,-".into(),
            "7,17,dispatcher,0,0,-1,fact,0,finished,-".into(),
        ]
    }

    #[test]
    fn clean_trace_passes() {
        let lines = valid_lines();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let violations = check(&trace(&refs));
        assert!(violations.is_empty(), "unexpected: {violations:?}");
    }

    #[test]
    fn missing_finished_detected() {
        let mut lines = valid_lines();
        lines.remove(7);
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let violations = check(&trace(&refs));
        assert!(violations
            .iter()
            .any(|v| v.task == Some(0) && v.message.contains("0 finished")));
    }

    #[test]
    fn child_before_parent_ready_detected() {
        let lines = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW",
            "1,12,sg,0,1,0,fact,1,submitted,A(0,0):RW",
            "2,13,dispatcher,0,0,-1,fact,0,ready,-",
            "3,14,sg,0,1,0,fact,1,ready,-",
            "4,15,kern,1,1,0,fact,1,run_start,-",
            "5,16,kern,1,1,0,fact,1,run_end,-",
            "6,17,sg,1,1,0,fact,1,finished,-",
            "7,18,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        let violations = check(&trace(&lines));
        assert!(violations
            .iter()
            .any(|v| v.task == Some(1) && v.message.contains("before parent became ready")));
    }

    #[test]
    fn epoch_overlap_detected() {
        // Two writers of the same block whose windows interleave: task 2
        // becomes ready before task 1 (the earlier writer) finished.
        let lines = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW",
            "1,11,dispatcher,0,0,-1,fact,0,ready,-",
            "2,12,sg,0,1,0,a,1,submitted,A(0,0):RW",
            "3,13,sg,0,2,0,b,1,submitted,A(0,0):RW",
            "4,14,sg,0,1,0,a,1,ready,-",
            "5,15,sg,0,2,0,b,1,ready,-",
            "6,16,kern,1,1,0,a,1,run_start,-",
            "7,17,kern,1,1,0,a,1,run_end,-",
            "8,18,sg,1,1,0,a,1,finished,-",
            "9,19,kern,1,2,0,b,1,run_start,-",
            "10,20,kern,1,2,0,b,1,run_end,-",
            "11,21,sg,1,2,0,b,1,finished,-",
            "12,22,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        let violations = check(&trace(&lines));
        assert!(
            violations
                .iter()
                .any(|v| v.task == Some(2) && v.message.contains("earlier access epoch")),
            "got {violations:?}"
        );
    }

    #[test]
    fn read_coalescing_allows_parallel_reads() {
        // Two readers of the same block may both be ready before either
        // finishes.
        let lines = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW A(1,0):RW",
            "1,11,dispatcher,0,0,-1,fact,0,ready,-",
            "2,12,sg,0,1,0,w,1,submitted,A(0,0):RW",
            "3,13,sg,0,1,0,w,1,ready,-",
            "4,14,kern,0,1,0,w,1,run_start,-",
            "5,15,kern,0,1,0,w,1,run_end,-",
            "6,16,sg,0,1,0,w,1,finished,-",
            "7,17,sg,0,2,0,r1,1,submitted,A(0,0):R A(1,0):RW",
            "8,18,sg,0,3,0,r2,1,submitted,A(0,0):R A(1,0):RW",
            "9,19,sg,0,2,0,r1,1,ready,-",
            "10,20,kern,0,2,0,r1,1,run_start,-",
            "11,21,kern,0,2,0,r1,1,run_end,-",
            "12,22,sg,0,2,0,r1,1,finished,-",
            "13,23,sg,0,3,0,r2,1,ready,-",
            "14,24,kern,0,3,0,r2,1,run_start,-",
            "15,25,kern,0,3,0,r2,1,run_end,-",
            "16,26,sg,0,3,0,r2,1,finished,-",
            "17,27,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        let violations = check(&trace(&lines));
        assert!(violations.is_empty(), "unexpected: {violations:?}");
    }

    #[test]
    fn distinct_matrices_do_not_collide() {
        // Writers of A(0,0) and B(0,0) overlap in time; same coordinates,
        // different matrices, so no epoch conflict.
        let lines = vec![
            "0,10,dispatcher,0,0,-1,p,0,submitted,A(0,0):RW B(0,0):RW",
            "1,11,dispatcher,0,0,-1,p,0,ready,-",
            "2,12,sg,0,1,0,a,1,submitted,A(0,0):RW",
            "3,13,sg,0,2,0,b,1,submitted,B(0,0):RW",
            "4,14,sg,0,1,0,a,1,ready,-",
            "5,15,sg,0,2,0,b,1,ready,-",
            "6,16,kern,1,1,0,a,1,run_start,-",
            "7,17,kern,1,1,0,a,1,run_end,-",
            "8,18,kern,1,2,0,b,1,run_start,-",
            "9,19,kern,1,2,0,b,1,run_end,-",
            "10,20,sg,1,1,0,a,1,finished,-",
            "11,21,sg,1,2,0,b,1,finished,-",
            "12,22,dispatcher,0,0,-1,p,0,finished,-",
        ];
        let violations = check(&trace(&lines));
        assert!(violations.is_empty(), "unexpected: {violations:?}");

        // Same trace with both writers on A(0,0) is the conflict the letter
        // distinguishes away.
        let collided: Vec<String> = lines
            .iter()
            .map(|l| l.replace("B(0,0)", "A(0,0)"))
            .collect();
        let refs: Vec<&str> = collided.iter().map(String::as_str).collect();
        assert!(check(&trace(&refs))
            .iter()
            .any(|v| v.message.contains("earlier access epoch")));
    }

    #[test]
    fn transfer_checks() {
        // Rank 1 reads a block owned (written) by rank 0: exactly one
        // transfer, recorded before the reader's ready.
        let base = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW A(0,1):RW",
            "1,11,dispatcher,0,0,-1,fact,0,ready,-",
            "2,12,dt,0,1,0,w,1,submitted,A(0,0):RW",
            "3,13,dt,1,2,0,r,1,submitted,A(0,0):R A(0,1):RW",
            "4,14,dt,0,1,0,w,1,ready,-",
            "5,15,kern,0,1,0,w,1,run_start,-",
            "6,16,kern,0,1,0,w,1,run_end,-",
            "7,17,dt,0,1,0,w,1,finished,-",
            "8,18,dt,0,-1,-1,-,1,message,0->1,A(0,0),1",
            "9,19,dt,1,2,0,r,1,ready,-",
            "10,20,kern,1,2,0,r,1,run_start,-",
            "11,21,kern,1,2,0,r,1,run_end,-",
            "12,22,dt,1,2,0,r,1,finished,-",
            "13,23,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        assert!(check(&trace(&base)).is_empty());

        // A second remote reader on rank 2 whose transfer is missing. (A
        // node with zero message events is indistinguishable from a purely
        // local one, so at least one transfer must remain for necessity
        // checking to engage.)
        let missing = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW A(0,1):RW A(0,2):RW",
            "1,11,dispatcher,0,0,-1,fact,0,ready,-",
            "2,12,dt,0,1,0,w,1,submitted,A(0,0):RW",
            "3,13,dt,1,2,0,r,1,submitted,A(0,0):R A(0,1):RW",
            "4,14,dt,2,3,0,r,1,submitted,A(0,0):R A(0,2):RW",
            "5,15,dt,0,1,0,w,1,ready,-",
            "6,16,kern,0,1,0,w,1,run_start,-",
            "7,17,kern,0,1,0,w,1,run_end,-",
            "8,18,dt,0,1,0,w,1,finished,-",
            "9,19,dt,0,-1,-1,-,1,message,0->1,A(0,0),1",
            "10,20,dt,1,2,0,r,1,ready,-",
            "11,21,dt,2,3,0,r,1,ready,-",
            "12,22,kern,1,2,0,r,1,run_start,-",
            "13,23,kern,1,2,0,r,1,run_end,-",
            "14,24,dt,1,2,0,r,1,finished,-",
            "15,25,kern,2,3,0,r,1,run_start,-",
            "16,26,kern,2,3,0,r,1,run_end,-",
            "17,27,dt,2,3,0,r,1,finished,-",
            "18,28,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        let violations = check(&trace(&missing));
        assert!(
            violations
                .iter()
                .any(|v| v.task == Some(3) && v.message.contains("no transfer from owner")),
            "got {violations:?}"
        );

        // Transfer recorded only after the reader became ready.
        let late = vec![
            "0,10,dispatcher,0,0,-1,fact,0,submitted,A(0,0):RW A(0,1):RW",
            "1,11,dispatcher,0,0,-1,fact,0,ready,-",
            "2,12,dt,0,1,0,w,1,submitted,A(0,0):RW",
            "3,13,dt,1,2,0,r,1,submitted,A(0,0):R A(0,1):RW",
            "4,14,dt,0,1,0,w,1,ready,-",
            "5,15,kern,0,1,0,w,1,run_start,-",
            "6,16,kern,0,1,0,w,1,run_end,-",
            "7,17,dt,0,1,0,w,1,finished,-",
            "8,18,dt,1,2,0,r,1,ready,-",
            "9,19,dt,0,-1,-1,-,1,message,0->1,A(0,0),1",
            "10,20,kern,1,2,0,r,1,run_start,-",
            "11,21,kern,1,2,0,r,1,run_end,-",
            "12,22,dt,1,2,0,r,1,finished,-",
            "13,23,dispatcher,0,0,-1,fact,0,finished,-",
        ];
        let violations = check(&trace(&late));
        assert!(
            violations
                .iter()
                .any(|v| v.message.contains("before the transfer")),
            "got {violations:?}"
        );

        // Spurious transfer to a rank with no reader there.
        let mut spurious = base.clone();
        spurious.insert(9, "14,18,dt,0,-1,-1,-,1,message,0->2,A(0,0),1");
        // Renumber the seq column of later lines to keep the trace sorted.
        let renumbered: Vec<String> = spurious
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let rest = l.split_once(',').unwrap().1;
                format!("{i},{rest}")
            })
            .collect();
        let refs: Vec<&str> = renumbered.iter().map(String::as_str).collect();
        let violations = check(&trace(&refs));
        assert!(
            violations
                .iter()
                .any(|v| v.message.contains("serves no remote reader")),
            "got {violations:?}"
        );
    }
}
