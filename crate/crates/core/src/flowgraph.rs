//! Executor flow graphs.
//!
//! A flow graph names executor nodes and wires them into a pipeline. The
//! runtime requires a chain: a designated root node, each non-kernel node
//! with exactly one outgoing edge, terminating at exactly one kernel node,
//! every node reachable. Tasks enter at the root and descend one partition
//! level per non-kernel node; leaf tasks run at the terminal kernel node.

use crate::error::{Error, Result};

/// Executor backend kinds.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ExecKind {
    /// Runs leaf tasks synchronously in the delivering context.
    Kernel,
    /// Worker-pool executor with epoch tracking.
    Threaded,
    /// Simulated-distributed executor: per-rank mailbox threads, block
    /// ownership, explicit transfers.
    Distsim,
}

impl ExecKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecKind::Kernel => "kernel",
            ExecKind::Threaded => "threaded",
            ExecKind::Distsim => "distsim",
        }
    }
}

impl std::str::FromStr for ExecKind {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "kernel" => Ok(ExecKind::Kernel),
            "threaded" => Ok(ExecKind::Threaded),
            "distsim" => Ok(ExecKind::Distsim),
            _ => Err(()),
        }
    }
}

impl std::fmt::Display for ExecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One executor node declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: String,
    pub kind: ExecKind,
    /// Worker count for threaded nodes; defaults to the logical core count.
    pub workers: Option<usize>,
    /// Rank count for distsim nodes; defaults to 2.
    pub ranks: Option<usize>,
    /// Rank grid override for distsim nodes (`rows × cols == ranks`).
    pub grid: Option<(usize, usize)>,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, kind: ExecKind) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            kind,
            workers: None,
            ranks: None,
            grid: None,
        }
    }
}

/// Executor topology: nodes, directed edges, and the root node id.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FlowGraph {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
    pub root: Option<String>,
}

impl FlowGraph {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Validates the chain shape and returns node indices in chain order,
    /// root first, terminal kernel node last.
    pub fn validate(&self) -> Result<Vec<usize>> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.nodes.is_empty() {
            return err("flow graph declares no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|m| m.id == n.id) {
                return err(format!("duplicate node id {:?}", n.id));
            }
            if n.workers.is_some() && n.kind != ExecKind::Threaded {
                return err(format!(
                    "node {:?}: parameter workers is only valid on threaded nodes",
                    n.id
                ));
            }
            if (n.ranks.is_some() || n.grid.is_some()) && n.kind != ExecKind::Distsim {
                return err(format!(
                    "node {:?}: parameters ranks/grid are only valid on distsim nodes",
                    n.id
                ));
            }
            if n.workers == Some(0) {
                return err(format!("node {:?}: workers must be at least 1", n.id));
            }
            if n.ranks == Some(0) {
                return err(format!("node {:?}: ranks must be at least 1", n.id));
            }
            if let Some((gr, gc)) = n.grid {
                let p = n.ranks.unwrap_or(2);
                if gr == 0 || gc == 0 || gr * gc != p {
                    return err(format!(
                        "node {:?}: grid {gr}x{gc} does not cover {p} rank(s)",
                        n.id
                    ));
                }
            }
        }
        let root_id = match &self.root {
            Some(r) => r.clone(),
            None => return err("flow graph declares no root".into()),
        };
        let Some(root_idx) = self.node_index(&root_id) else {
            return err(format!("root references unknown node {root_id:?}"));
        };
        // Per-node outgoing edges.
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (from, to) in &self.edges {
            let Some(f) = self.node_index(from) else {
                return err(format!("edge references unknown node {from:?}"));
            };
            let Some(t) = self.node_index(to) else {
                return err(format!("edge references unknown node {to:?}"));
            };
            out[f].push(t);
        }
        // Walk the chain from the root.
        let mut chain = Vec::new();
        let mut visited = vec![false; self.nodes.len()];
        let mut cur = root_idx;
        loop {
            if visited[cur] {
                return err(format!(
                    "flow graph contains a cycle through node {:?}",
                    self.nodes[cur].id
                ));
            }
            visited[cur] = true;
            chain.push(cur);
            let node = &self.nodes[cur];
            match (node.kind, out[cur].len()) {
                (ExecKind::Kernel, 0) => break,
                (ExecKind::Kernel, _) => {
                    return err(format!(
                        "kernel node {:?} must be terminal but has outgoing edges",
                        node.id
                    ));
                }
                (_, 1) => cur = out[cur][0],
                (_, n) => {
                    return err(format!(
                        "node {:?} must have exactly one outgoing edge, found {n}",
                        node.id
                    ));
                }
            }
        }
        if let Some(unreached) = visited.iter().position(|v| !v) {
            return err(format!(
                "node {:?} is not reachable from the root",
                self.nodes[unreached].id
            ));
        }
        // The distsim executor owns whole level-1 task subtrees; it only
        // works as the entry node of the chain.
        for (pos, &idx) in chain.iter().enumerate() {
            if self.nodes[idx].kind == ExecKind::Distsim && pos != 0 {
                return err(format!(
                    "distsim node {:?} must be the root of the flow graph",
                    self.nodes[idx].id
                ));
            }
        }
        Ok(chain)
    }

    /// Number of non-kernel stages; partitioned data must be at least this
    /// deep for tasks to reach the kernel node as leaves.
    pub fn depth(&self) -> Result<usize> {
        Ok(self.validate()?.len() - 1)
    }
}
