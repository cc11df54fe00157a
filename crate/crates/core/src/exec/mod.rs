//! Executor backends: one module per node kind.

pub(crate) mod distsim;
pub(crate) mod kernel;
pub(crate) mod threaded;

pub use distsim::RankMap;

use std::sync::Arc;

use crate::dispatcher::Runtime;
use crate::error::Result;
use crate::flowgraph::{ExecKind, NodeSpec};

/// An instantiated chain node.
pub(crate) enum ExecNode {
    Kernel(kernel::KernelNode),
    Threaded(threaded::ThreadedNode),
    Distsim(distsim::DistsimNode),
}

impl ExecNode {
    pub fn instantiate(rt: &Arc<Runtime>, pos: usize, spec: &NodeSpec) -> Result<ExecNode> {
        Ok(match spec.kind {
            ExecKind::Kernel => ExecNode::Kernel(kernel::KernelNode),
            ExecKind::Threaded => {
                ExecNode::Threaded(threaded::ThreadedNode::spawn(rt, pos, spec.workers))
            }
            ExecKind::Distsim => ExecNode::Distsim(distsim::DistsimNode::spawn(
                rt,
                pos,
                spec.ranks.unwrap_or(2),
                spec.grid,
            )?),
        })
    }

    /// Stops node threads and joins them. Idempotent.
    pub fn shutdown(&self) {
        match self {
            ExecNode::Kernel(_) => {}
            ExecNode::Threaded(t) => t.shutdown(),
            ExecNode::Distsim(d) => d.shutdown(),
        }
    }

    /// Appends node state to a deadlock report.
    pub fn dump(&self, name: &str, out: &mut String) {
        match self {
            ExecNode::Kernel(_) => {}
            ExecNode::Threaded(t) => t.dump(name, out),
            ExecNode::Distsim(d) => d.dump(name, out),
        }
    }
}
