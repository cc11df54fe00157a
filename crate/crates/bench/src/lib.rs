//! Shared fixtures for the criterion benchmark targets: configuration
//! texts for each execution backend, matrix builders, and a minimal
//! splitting operation for measuring pure runtime overhead.

use std::sync::Arc;

use cascade_core::{
    create_data, parse_config, ChildSink, DataHandle, Dispatcher, Error, FlowGraph, Operation,
    OpRegistry, RunCtx, Task, TaskArg,
};

/// (label, configuration text) pairs spanning the three backend families
/// with fixed worker/rank counts so results are comparable across machines.
pub fn backend_configs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("sequential", "node cb kernel\nroot cb\n"),
        (
            "threaded-2",
            "node sg threaded workers=2\nnode cb kernel\nedge sg cb\nroot sg\n",
        ),
        (
            "threaded-4",
            "node sg threaded workers=4\nnode cb kernel\nedge sg cb\nroot sg\n",
        ),
        (
            "distsim-4",
            "node dt distsim ranks=4\nnode sg threaded workers=2\nnode cb kernel\n\
             edge dt sg\nedge sg cb\nroot dt\n",
        ),
    ]
}

pub fn graph(text: &str) -> FlowGraph {
    parse_config(text).expect("benchmark configuration parses")
}

/// Fresh symmetric positive-definite matrix partitioned two levels deep.
pub fn spd_matrix(n: usize, b1: usize, b2: usize, seed: u64) -> DataHandle {
    let m = create_data(n, n, &[(b1, b1), (b2, b2)]).expect("partition spec divides n");
    m.fill_spd(seed).expect("fill");
    m
}

/// Splits one level down and bumps every cell of each leaf: the cheapest
/// operation that still exercises the full split/track/run pipeline, for
/// isolating scheduling overhead from kernel compute.
pub struct TouchOp;

impl Operation for TouchOp {
    fn name(&self) -> &str {
        "touch"
    }

    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<(), Error> {
        let h = &task.args[0].handle;
        let (gr, gc) = h.num_partitions();
        for i in 0..gr {
            for j in 0..gc {
                sink.emit("touch", vec![TaskArg::read_write(h.get_partition(i, j)?)])?;
            }
        }
        Ok(())
    }

    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<(), Error> {
        let v = ctx.view(task, 0);
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                v.set(r, c, v.at(r, c) + 1.0);
            }
        }
        Ok(())
    }
}

pub fn touch_registry() -> OpRegistry {
    let mut reg = OpRegistry::new();
    reg.register(Arc::new(TouchOp)).unwrap();
    reg
}

/// Dispatcher wired for the blocked factorization operations.
pub fn factorization_dispatcher(config_text: &str) -> Dispatcher {
    Dispatcher::configure(&graph(config_text), cascade_core::cholesky::operations())
        .expect("configure")
}
