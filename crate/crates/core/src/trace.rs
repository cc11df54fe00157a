//! Execution tracing.
//!
//! Every lifecycle step and every simulated block transfer can be recorded
//! as a [`TraceEvent`]. Events carry a globally ordered sequence number
//! drawn at emission time; each execution context buffers locally and the
//! collector merges by sequence number at the end, so tracing stays off the
//! hot paths' shared state.
//!
//! Serialized form is one CSV line per event:
//!
//! ```text
//! seq,t_ns,node,ctx,task,parent,op,level,event,detail
//! ```
//!
//! `detail` is the last field and may contain commas. For lifecycle events
//! it holds the argument list (`A(i,j):R A(k,l):RW`, block coordinates at
//! the task's level); for `message` events it holds `src->dst,A(i,j),epoch`.
//! Fields without a value hold `-` (`task`/`parent` use `-1`).

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;


pub const TRACE_HEADER: &str = "seq,t_ns,node,ctx,task,parent,op,level,event,detail";

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum EventKind {
    Submitted,
    Ready,
    RunStart,
    RunEnd,
    Finished,
    Message,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Submitted => "submitted",
            EventKind::Ready => "ready",
            EventKind::RunStart => "run_start",
            EventKind::RunEnd => "run_end",
            EventKind::Finished => "finished",
            EventKind::Message => "message",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "submitted" => EventKind::Submitted,
            "ready" => EventKind::Ready,
            "run_start" => EventKind::RunStart,
            "run_end" => EventKind::RunEnd,
            "finished" => EventKind::Finished,
            "message" => EventKind::Message,
            _ => return None,
        })
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    /// Global emission order.
    pub seq: u64,
    /// Nanoseconds since the collector was created.
    pub t_ns: u64,
    /// Executor node id, or `dispatcher` for dispatcher-tracked steps.
    pub node: String,
    /// Context ordinal within the node (worker index, rank, 0).
    pub ctx: usize,
    /// Task id, `-1` for message events.
    pub task: i64,
    /// Parent task id, `-1` for roots and messages.
    pub parent: i64,
    /// Operation name, `-` for messages.
    pub op: String,
    /// Task level; for messages, the level of the transferred region.
    pub level: i64,
    pub kind: EventKind,
    pub detail: String,
}

impl TraceEvent {
    pub fn to_line(&self) -> String {
        let detail = if self.detail.is_empty() { "-" } else { &self.detail };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.seq,
            self.t_ns,
            self.node,
            self.ctx,
            self.task,
            self.parent,
            self.op,
            self.level,
            self.kind,
            detail
        )
    }

    /// Parses one CSV line; `None` on malformed input.
    pub fn parse_line(line: &str) -> Option<TraceEvent> {
        let mut parts = line.splitn(10, ',');
        let seq = parts.next()?.parse().ok()?;
        let t_ns = parts.next()?.parse().ok()?;
        let node = parts.next()?.to_string();
        let ctx = parts.next()?.parse().ok()?;
        let task = parts.next()?.parse().ok()?;
        let parent = parts.next()?.parse().ok()?;
        let op = parts.next()?.to_string();
        let level = parts.next()?.parse().ok()?;
        let kind = EventKind::parse(parts.next()?)?;
        let detail_raw = parts.next()?;
        let detail = if detail_raw == "-" {
            String::new()
        } else {
            detail_raw.to_string()
        };
        if node.is_empty() || op.is_empty() {
            return None;
        }
        Some(TraceEvent {
            seq,
            t_ns,
            node,
            ctx,
            task,
            parent,
            op,
            level,
            kind,
            detail,
        })
    }
}

/// Shared collector state. Buffers register themselves here and the
/// collector drains them when asked for the merged trace.
struct CollectorShared {
    seq: AtomicU64,
    epoch: Instant,
    buffers: Mutex<Vec<Arc<Mutex<Vec<TraceEvent>>>>>,
}

/// Collects trace events from many execution contexts.
#[derive(Clone)]
pub struct TraceCollector {
    shared: Arc<CollectorShared>,
}

impl TraceCollector {
    pub fn new() -> TraceCollector {
        TraceCollector {
            shared: Arc::new(CollectorShared {
                seq: AtomicU64::new(0),
                epoch: Instant::now(),
                buffers: Mutex::new(Vec::new()),
            }),
        }
    }

    /// Creates a buffer for one execution context.
    pub fn buffer(&self) -> TraceBuf {
        let buf = Arc::new(Mutex::new(Vec::new()));
        self.shared.buffers.lock().unwrap().push(Arc::clone(&buf));
        TraceBuf {
            shared: Arc::clone(&self.shared),
            buf,
        }
    }

    /// Drains all buffers and returns events sorted by sequence number.
    /// Callers must ensure emitting contexts are quiescent first.
    pub fn drain(&self) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        for buf in self.shared.buffers.lock().unwrap().iter() {
            events.append(&mut buf.lock().unwrap());
        }
        events.sort_by_key(|e| e.seq);
        events
    }
}

impl Default for TraceCollector {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-context event buffer. Emission takes a private lock only (plus one
/// atomic increment for the global sequence number).
#[derive(Clone)]
pub struct TraceBuf {
    shared: Arc<CollectorShared>,
    buf: Arc<Mutex<Vec<TraceEvent>>>,
}

impl TraceBuf {
    #[allow(clippy::too_many_arguments)]
    pub fn emit(
        &self,
        node: &str,
        ctx: usize,
        task: i64,
        parent: i64,
        op: &str,
        level: i64,
        kind: EventKind,
        detail: String,
    ) {
        let seq = self.shared.seq.fetch_add(1, Ordering::Relaxed);
        let t_ns = self.shared.epoch.elapsed().as_nanos() as u64;
        self.buf.lock().unwrap().push(TraceEvent {
            seq,
            t_ns,
            node: node.to_string(),
            ctx,
            task,
            parent,
            op: op.to_string(),
            level,
            kind,
            detail,
        });
    }
}

/// Serializes events (with header) into a writer.
pub fn write_trace(events: &[TraceEvent], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for e in events {
        writeln!(w, "{}", e.to_line())?;
    }
    Ok(())
}

/// Reads a serialized trace. `Err` carries a description of the first
/// malformed line (or emptiness).
pub fn read_trace(text: &str) -> std::result::Result<Vec<TraceEvent>, String> {
    if text.trim().is_empty() {
        return Err("trace file is empty".into());
    }
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.trim() == TRACE_HEADER {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match TraceEvent::parse_line(line) {
            Some(e) => events.push(e),
            None => return Err(format!("malformed trace line {}: {line:?}", lineno + 1)),
        }
    }
    Ok(events)
}

/// Multiset of executed leaf tasks as sorted `(op, args)` pairs. Two runs
/// of the same computation must agree on this regardless of configuration.
pub fn leaf_multiset(events: &[TraceEvent]) -> Vec<(String, String)> {
    use std::collections::HashMap;
    let mut submitted: HashMap<i64, &TraceEvent> = HashMap::new();
    for e in events {
        if e.kind == EventKind::Submitted {
            submitted.insert(e.task, e);
        }
    }
    let mut leaves: Vec<(String, String)> = events
        .iter()
        .filter(|e| e.kind == EventKind::RunStart)
        .map(|e| {
            let args = submitted
                .get(&e.task)
                .map(|s| s.detail.clone())
                .unwrap_or_default();
            (e.op.clone(), args)
        })
        .collect();
    leaves.sort();
    leaves
}

/// Canonical rendering of the task tree: identifiers are erased, children
/// ordered by creation. Configuration-independent for a fixed computation,
/// so equal strings mean structurally identical split trees.
pub fn canonical_tree(events: &[TraceEvent]) -> String {
    use std::collections::HashMap;
    let mut label: HashMap<i64, (String, String)> = HashMap::new();
    let mut children: HashMap<i64, Vec<i64>> = HashMap::new();
    let mut roots: Vec<i64> = Vec::new();
    for e in events {
        if e.kind == EventKind::Submitted {
            label.insert(e.task, (e.op.clone(), e.detail.clone()));
            if e.parent < 0 {
                roots.push(e.task);
            } else {
                children.entry(e.parent).or_default().push(e.task);
            }
        }
    }
    for list in children.values_mut() {
        list.sort_unstable(); // id order == creation order within a split
    }
    roots.sort_unstable();
    fn render(
        id: i64,
        label: &HashMap<i64, (String, String)>,
        children: &HashMap<i64, Vec<i64>>,
        out: &mut String,
    ) {
        let (op, args) = label.get(&id).cloned().unwrap_or_default();
        write!(out, "({op}[{args}]").unwrap();
        if let Some(kids) = children.get(&id) {
            for &k in kids {
                render(k, label, children, out);
            }
        }
        out.push(')');
    }
    let mut out = String::new();
    for r in roots {
        render(r, &label, &children, &mut out);
    }
    out
}
