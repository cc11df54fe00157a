//! Leaf block kernels: Cholesky factor, triangular solve, symmetric and
//! general rank updates.
//!
//! All kernels operate on [`BlockView`]s — unchecked windows into either a
//! region of a partitioned matrix or a staged buffer copy. They are written
//! as straightforward loops; the runtime gets its speed from running many
//! blocks concurrently, not from tuned kernels.
//!
//! Conventions, shared with the update kernels' callers:
//! * the factor kernels work on the **lower** triangle; [`potrf`] zeroes the
//!   strict upper triangle of its block so that level-0 results contain a
//!   clean `L`,
//! * [`syrk`] and [`gemm`] are *subtractive*: `C -= A·Aᵀ` and `C -= A·Bᵀ`.

use std::sync::Arc;

use crate::data::DataHandle;
use crate::error::{Error, Result};

/// An unchecked rows×cols window with a row stride, used by kernels.
///
/// Views alias the underlying store; soundness of concurrent kernel calls
/// is the epoch protocol's responsibility. A view built over a staged
/// buffer keeps the buffer alive via `_staged`.
pub struct BlockView {
    base: *mut f64,
    rows: usize,
    cols: usize,
    stride: usize,
    /// Global offsets of the window, for error messages.
    row_off: usize,
    col_off: usize,
    _staged: Option<Arc<Vec<f64>>>,
}

// SAFETY: a view is just a window descriptor; the epoch protocol
// serializes conflicting element access.
unsafe impl Send for BlockView {}

impl BlockView {
    /// View over a region of a partitioned matrix.
    pub fn of(handle: &DataHandle) -> BlockView {
        let (base, rows, cols, stride) = handle.raw_parts();
        BlockView {
            base,
            rows,
            cols,
            stride,
            row_off: handle.row_offset(),
            col_off: handle.col_offset(),
            _staged: None,
        }
    }

    /// Read-only view into a staged row-major copy of a larger region.
    /// `(row_off, col_off)` position the window inside the buffer, whose
    /// row stride is `buf_cols`; `(global_row, global_col)` preserve the
    /// original matrix offsets for error messages.
    pub(crate) fn of_staged(
        buf: Arc<Vec<f64>>,
        buf_cols: usize,
        row_off: usize,
        col_off: usize,
        rows: usize,
        cols: usize,
        global_row: usize,
        global_col: usize,
    ) -> BlockView {
        debug_assert!((row_off + rows - 1) * buf_cols + col_off + cols <= buf.len());
        let base = unsafe { (buf.as_ptr() as *mut f64).add(row_off * buf_cols + col_off) };
        BlockView {
            base,
            rows,
            cols,
            stride: buf_cols,
            row_off: global_row,
            col_off: global_col,
            _staged: Some(buf),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Global row offset of this window in its level-0 matrix.
    pub fn row_offset(&self) -> usize {
        self.row_off
    }

    /// Global column offset of this window in its level-0 matrix.
    pub fn col_offset(&self) -> usize {
        self.col_off
    }

    #[inline]
    fn row(&self, r: usize) -> *mut f64 {
        debug_assert!(r < self.rows);
        unsafe { self.base.add(r * self.stride) }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        unsafe { *self.row(r).add(c) }
    }

    #[inline]
    pub fn set(&self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        unsafe { *self.row(r).add(c) = v };
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Usage(msg()))
    }
}

/// In-place lower Cholesky factorization of a square block: `A = L·Lᵀ`,
/// leaving `L` in the lower triangle and zeroing the strict upper triangle.
///
/// Fails with a numerical error naming the global pivot row when a pivot is
/// not strictly positive.
pub fn potrf(a: &BlockView) -> Result<()> {
    require(a.rows == a.cols, || {
        format!("potrf requires a square block, got {}x{}", a.rows, a.cols)
    })?;
    let n = a.rows;
    for k in 0..n {
        let pivot = a.at(k, k);
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(Error::Numerical {
                op: "potrf",
                row: a.row_off + k,
                value: pivot,
            });
        }
        let rkk = pivot.sqrt();
        a.set(k, k, rkk);
        for i in k + 1..n {
            a.set(i, k, a.at(i, k) / rkk);
        }
        for j in k + 1..n {
            let ajk = a.at(j, k);
            if ajk != 0.0 {
                for i in j..n {
                    a.set(i, j, a.at(i, j) - a.at(i, k) * ajk);
                }
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            a.set(i, j, 0.0);
        }
    }
    Ok(())
}

/// Triangular solve from the right: `B ← B · L⁻ᵀ` for lower-triangular `L`.
///
/// Row `r` of `B` solves `x · Lᵀ = b` by forward substitution over columns.
/// A zero diagonal entry of `L` is reported as a numerical failure at its
/// global row.
pub fn trsm(l: &BlockView, b: &BlockView) -> Result<()> {
    require(l.rows == l.cols, || {
        format!("trsm requires a square factor, got {}x{}", l.rows, l.cols)
    })?;
    require(b.cols == l.rows, || {
        format!(
            "trsm shape mismatch: B is {}x{}, L is {}x{}",
            b.rows, b.cols, l.rows, l.cols
        )
    })?;
    let n = l.rows;
    for r in 0..b.rows {
        for j in 0..n {
            let mut s = b.at(r, j);
            for t in 0..j {
                s -= b.at(r, t) * l.at(j, t);
            }
            let d = l.at(j, j);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Numerical {
                    op: "trsm",
                    row: l.row_off + j,
                    value: d,
                });
            }
            b.set(r, j, s / d);
        }
    }
    Ok(())
}

/// Symmetric rank update on the lower triangle: `C ← C − A·Aᵀ`, touching
/// only entries on or below the diagonal of `C`.
pub fn syrk(a: &BlockView, c: &BlockView) -> Result<()> {
    require(c.rows == c.cols, || {
        format!("syrk requires a square target, got {}x{}", c.rows, c.cols)
    })?;
    require(a.rows == c.rows, || {
        format!(
            "syrk shape mismatch: A is {}x{}, C is {}x{}",
            a.rows, a.cols, c.rows, c.cols
        )
    })?;
    let k = a.cols;
    for i in 0..c.rows {
        for j in 0..=i {
            let mut s = 0.0;
            for t in 0..k {
                s += a.at(i, t) * a.at(j, t);
            }
            c.set(i, j, c.at(i, j) - s);
        }
    }
    Ok(())
}

/// General subtractive product with a transposed right factor:
/// `C ← C − A·Bᵀ`.
pub fn gemm(a: &BlockView, b: &BlockView, c: &BlockView) -> Result<()> {
    require(a.rows == c.rows && b.rows == c.cols && a.cols == b.cols, || {
        format!(
            "gemm shape mismatch: A is {}x{}, B is {}x{}, C is {}x{}",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )
    })?;
    let k = a.cols;
    for i in 0..c.rows {
        for j in 0..c.cols {
            let mut s = 0.0;
            for t in 0..k {
                s += a.at(i, t) * b.at(j, t);
            }
            c.set(i, j, c.at(i, j) - s);
        }
    }
    Ok(())
}
