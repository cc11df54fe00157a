//! Blocked Cholesky factorization expressed as splittable operations.
//!
//! Four operations cover the factorization: `potrf` (factor a diagonal
//! region), `trsm` (triangular solve of a panel), `syrk` (symmetric
//! rank-update of diagonal regions), and `gemm` (general update). Each
//! knows how to split itself over the next partition level and how to run
//! on leaf regions, so the same program text executes unchanged on any
//! flow-graph configuration.
//!
//! Update operations accept composite argument lists (several read terms
//! folding into one output) so that splitting never manufactures extra
//! intermediate state: a split of `syrk`/`gemm` regroups terms per output
//! block and emits one child per output (for `syrk`) or per term (for
//! `gemm`).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels;
use crate::task::{AccessMode, ChildSink, Operation, OpRegistry, RunCtx, Task, TaskArg};

/// Registry containing the four factorization operations.
pub fn operations() -> OpRegistry {
    let mut reg = OpRegistry::new();
    reg.register(Arc::new(PotrfOp)).unwrap();
    reg.register(Arc::new(TrsmOp)).unwrap();
    reg.register(Arc::new(SyrkOp)).unwrap();
    reg.register(Arc::new(GemmOp)).unwrap();
    reg
}

fn expect_args(task: &Task, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{} expects arguments {want}, got {}",
            task.op,
            task.args_detail()
        )))
    }
}

fn expect_mode(task: &Task, idx: usize, mode: AccessMode) -> Result<()> {
    if task.args[idx].mode == mode {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{} argument {idx} must be {}, got {}",
            task.op,
            mode.token(),
            task.args[idx].mode.token()
        )))
    }
}

/// Grid of a region that is about to be split; leaves cannot be split.
fn grid_of(task: &Task, idx: usize) -> Result<(usize, usize)> {
    let h = &task.args[idx].handle;
    match h.num_partitions() {
        (0, 0) => Err(Error::Usage(format!(
            "{} cannot split: argument {idx} ({h:?}) is a leaf region",
            task.op
        ))),
        g => Ok(g),
    }
}

/// Factor a symmetric positive-definite region: A = L·Lᵀ, L stored in the
/// lower triangle. Arguments: `[A: RW]` with A square.
pub struct PotrfOp;

impl Operation for PotrfOp {
    fn name(&self) -> &str {
        "potrf"
    }

    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<()> {
        expect_args(task, "[A:RW]", task.args.len() == 1)?;
        expect_mode(task, 0, AccessMode::ReadWrite)?;
        let a = &task.args[0].handle;
        let (p, pc) = grid_of(task, 0)?;
        if p != pc {
            return Err(Error::Usage(format!(
                "potrf needs a square partition grid, got {p}x{pc}"
            )));
        }
        for k in 0..p {
            sink.emit("potrf", vec![TaskArg::read_write(a.get_partition(k, k)?)])?;
            for i in k + 1..p {
                sink.emit(
                    "trsm",
                    vec![
                        TaskArg::read(a.get_partition(k, k)?),
                        TaskArg::read_write(a.get_partition(i, k)?),
                    ],
                )?;
            }
            for i in k + 1..p {
                sink.emit(
                    "syrk",
                    vec![
                        TaskArg::read(a.get_partition(i, k)?),
                        TaskArg::read_write(a.get_partition(i, i)?),
                    ],
                )?;
            }
            for j in k + 1..p {
                for i in j + 1..p {
                    sink.emit(
                        "gemm",
                        vec![
                            TaskArg::read(a.get_partition(i, k)?),
                            TaskArg::read(a.get_partition(j, k)?),
                            TaskArg::read_write(a.get_partition(i, j)?),
                        ],
                    )?;
                }
            }
        }
        Ok(())
    }

    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<()> {
        expect_args(task, "[A:RW]", task.args.len() == 1)?;
        kernels::potrf(&ctx.view(task, 0))
    }
}

/// Panel solve: B ← B·L⁻ᵀ with L lower-triangular. Arguments:
/// `[L: R, B: RW]`; B's column grid must match L's.
pub struct TrsmOp;

impl Operation for TrsmOp {
    fn name(&self) -> &str {
        "trsm"
    }

    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<()> {
        expect_args(task, "[L:R, B:RW]", task.args.len() == 2)?;
        expect_mode(task, 0, AccessMode::Read)?;
        expect_mode(task, 1, AccessMode::ReadWrite)?;
        let l = &task.args[0].handle;
        let b = &task.args[1].handle;
        let (q, qc) = grid_of(task, 0)?;
        let (qb, bc) = grid_of(task, 1)?;
        if q != qc || bc != q {
            return Err(Error::Usage(format!(
                "trsm grids disagree: L is {q}x{qc}, B is {qb}x{bc}"
            )));
        }
        for j in 0..q {
            for r in 0..qb {
                for t in 0..j {
                    sink.emit(
                        "gemm",
                        vec![
                            TaskArg::read(b.get_partition(r, t)?),
                            TaskArg::read(l.get_partition(j, t)?),
                            TaskArg::read_write(b.get_partition(r, j)?),
                        ],
                    )?;
                }
                sink.emit(
                    "trsm",
                    vec![
                        TaskArg::read(l.get_partition(j, j)?),
                        TaskArg::read_write(b.get_partition(r, j)?),
                    ],
                )?;
            }
        }
        Ok(())
    }

    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<()> {
        expect_args(task, "[L:R, B:RW]", task.args.len() == 2)?;
        kernels::trsm(&ctx.view(task, 0), &ctx.view(task, 1))
    }
}

/// Symmetric update: C −= Σₘ Aₘ·Aₘᵀ on the lower triangle. Arguments:
/// `[A₁: R, …, A_M: R, C: RW]` with M ≥ 1 and C square.
pub struct SyrkOp;

impl Operation for SyrkOp {
    fn name(&self) -> &str {
        "syrk"
    }

    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<()> {
        expect_args(task, "[A..:R, C:RW]", task.args.len() >= 2)?;
        let last = task.args.len() - 1;
        for i in 0..last {
            expect_mode(task, i, AccessMode::Read)?;
        }
        expect_mode(task, last, AccessMode::ReadWrite)?;
        let c = &task.args[last].handle;
        let (q, qc) = grid_of(task, last)?;
        if q != qc {
            return Err(Error::Usage(format!(
                "syrk needs a square output grid, got {q}x{qc}"
            )));
        }
        let mut terms = Vec::with_capacity(last);
        for m in 0..last {
            let (ar, at) = grid_of(task, m)?;
            if ar != q {
                return Err(Error::Usage(format!(
                    "syrk term {m} has {ar} block rows but the output has {q}"
                )));
            }
            terms.push((task.args[m].handle.clone(), at));
        }
        for r in 0..q {
            for s in 0..=r {
                let mut args = Vec::new();
                if r == s {
                    for (a, at) in &terms {
                        for t in 0..*at {
                            args.push(TaskArg::read(a.get_partition(r, t)?));
                        }
                    }
                    args.push(TaskArg::read_write(c.get_partition(r, r)?));
                    sink.emit("syrk", args)?;
                } else {
                    for (a, at) in &terms {
                        for t in 0..*at {
                            args.push(TaskArg::read(a.get_partition(r, t)?));
                            args.push(TaskArg::read(a.get_partition(s, t)?));
                        }
                    }
                    args.push(TaskArg::read_write(c.get_partition(r, s)?));
                    sink.emit("gemm", args)?;
                }
            }
        }
        Ok(())
    }

    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<()> {
        expect_args(task, "[A..:R, C:RW]", task.args.len() >= 2)?;
        let last = task.args.len() - 1;
        let c = ctx.view(task, last);
        for m in 0..last {
            kernels::syrk(&ctx.view(task, m), &c)?;
        }
        Ok(())
    }
}

/// General update: C −= Σₘ Aₘ·Bₘᵀ. Arguments:
/// `[A₁: R, B₁: R, …, A_M: R, B_M: R, C: RW]` with M ≥ 1.
pub struct GemmOp;

impl Operation for GemmOp {
    fn name(&self) -> &str {
        "gemm"
    }

    fn split(&self, task: &Task, sink: &mut dyn ChildSink) -> Result<()> {
        expect_args(
            task,
            "[A..:R, B..:R, C:RW]",
            task.args.len() >= 3 && task.args.len() % 2 == 1,
        )?;
        let last = task.args.len() - 1;
        for i in 0..last {
            expect_mode(task, i, AccessMode::Read)?;
        }
        expect_mode(task, last, AccessMode::ReadWrite)?;
        let c = &task.args[last].handle;
        let (qr, qs) = grid_of(task, last)?;
        let mut terms = Vec::with_capacity(last / 2);
        for m in 0..last / 2 {
            let a = &task.args[2 * m].handle;
            let b = &task.args[2 * m + 1].handle;
            let (ar, at) = grid_of(task, 2 * m)?;
            let (br, bt) = grid_of(task, 2 * m + 1)?;
            if ar != qr || br != qs || at != bt {
                return Err(Error::Usage(format!(
                    "gemm term {m} grids disagree: A is {ar}x{at}, B is {br}x{bt}, \
                     C is {qr}x{qs}"
                )));
            }
            terms.push((a.clone(), b.clone(), at));
        }
        for r in 0..qr {
            for s in 0..qs {
                for (a, b, tn) in &terms {
                    for t in 0..*tn {
                        sink.emit(
                            "gemm",
                            vec![
                                TaskArg::read(a.get_partition(r, t)?),
                                TaskArg::read(b.get_partition(s, t)?),
                                TaskArg::read_write(c.get_partition(r, s)?),
                            ],
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    fn run(&self, task: &Task, ctx: &RunCtx<'_>) -> Result<()> {
        expect_args(
            task,
            "[A..:R, B..:R, C:RW]",
            task.args.len() >= 3 && task.args.len() % 2 == 1,
        )?;
        let last = task.args.len() - 1;
        let c = ctx.view(task, last);
        for m in 0..last / 2 {
            kernels::gemm(&ctx.view(task, 2 * m), &ctx.view(task, 2 * m + 1), &c)?;
        }
        Ok(())
    }
}
