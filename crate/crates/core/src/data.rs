//! Hierarchically partitioned matrix storage.
//!
//! A matrix is created once with a [`PartitionSpec`] describing how each
//! level subdivides the previous one, e.g. `[(2, 2), (2, 2)]` splits the
//! matrix into a 2×2 grid of blocks and each block again into 2×2. The full
//! partition tree is built eagerly at creation; [`DataHandle`]s are cheap
//! references to tree nodes. All handles share one row-major `f64` store.
//!
//! Handles do not enforce exclusive access. Safe concurrent use relies on
//! the runtime's epoch protocol, which only lets disjoint or read-only
//! regions execute concurrently; see the dispatcher module.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-level block grid dimensions, outermost level first. Entry `(r, c)`
/// splits each region of the previous level into an `r × c` grid.
pub type PartitionSpec = Vec<(usize, usize)>;

/// Row-major storage with interior mutability.
///
/// Kernels write through raw pointers obtained from views. This is sound
/// only because the epoch protocol guarantees that concurrently running
/// tasks touch disjoint regions (or read shared ones); the store itself
/// performs no synchronization.
pub(crate) struct Store {
    cols: usize,
    cells: UnsafeCell<Vec<f64>>,
}

// SAFETY: concurrent access is externally synchronized by the epoch
// protocol; see the module docs.
unsafe impl Sync for Store {}
unsafe impl Send for Store {}

impl Store {
    fn new(rows: usize, cols: usize) -> Self {
        Store {
            cols,
            cells: UnsafeCell::new(vec![0.0; rows * cols]),
        }
    }

    #[inline]
    pub(crate) fn base(&self) -> *mut f64 {
        // SAFETY: we only produce a raw pointer; dereferencing is the
        // caller's obligation under the epoch protocol.
        unsafe { (*self.cells.get()).as_mut_ptr() }
    }

    #[inline]
    pub(crate) fn stride(&self) -> usize {
        self.cols
    }
}

/// One node of the partition tree.
#[derive(Debug)]
struct TreeNode {
    parent: Option<u32>,
    level: usize,
    row_off: usize,
    col_off: usize,
    rows: usize,
    cols: usize,
    /// Grid this node is split into; `None` for leaves.
    grid: Option<(usize, usize)>,
    /// Child node indices in row-major grid order; empty for leaves.
    children: Vec<u32>,
}

/// The full region hierarchy plus the backing store.
pub struct PartitionTree {
    id: u32,
    store: Store,
    nodes: Vec<TreeNode>,
    levels: usize,
}

static NEXT_TREE_ID: AtomicU32 = AtomicU32::new(1);

/// Identifies a region globally: (tree, node) pair. `Ord` follows creation
/// order within a tree, which tests use for deterministic iteration.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct HandleId {
    pub(crate) tree: u32,
    pub(crate) node: u32,
}

/// A reference to one region of a partitioned matrix.
#[derive(Clone)]
pub struct DataHandle {
    tree: Arc<PartitionTree>,
    node: u32,
}

impl std::fmt::Debug for DataHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (i, j) = self.block_coords();
        write!(f, "A{}({i},{j})@L{}", self.tree.id, self.level())
    }
}

impl PartialEq for DataHandle {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}
impl Eq for DataHandle {}

/// Creates a `rows × cols` matrix partitioned per `spec` and returns the
/// level-0 handle covering the whole matrix.
///
/// Every level must divide its parent regions evenly; ragged partitions are
/// rejected. The tree is built eagerly, so `get_partition` never allocates.
pub fn create_data(rows: usize, cols: usize, spec: &[(usize, usize)]) -> Result<DataHandle> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    // Validate divisibility level by level before building anything.
    let (mut r, mut c) = (rows, cols);
    for (lvl, &(gr, gc)) in spec.iter().enumerate() {
        if gr == 0 || gc == 0 {
            return Err(Error::Config(format!(
                "partition grid at level {} must be at least 1x1, got {gr}x{gc}",
                lvl + 1
            )));
        }
        if r % gr != 0 || c % gc != 0 {
            return Err(Error::Config(format!(
                "ragged partition: {r}x{c} region at level {lvl} does not divide evenly \
                 into a {gr}x{gc} grid"
            )));
        }
        r /= gr;
        c /= gc;
    }

    let mut nodes = Vec::new();
    nodes.push(TreeNode {
        parent: None,
        level: 0,
        row_off: 0,
        col_off: 0,
        rows,
        cols,
        grid: None,
        children: Vec::new(),
    });
    // Breadth-first expansion, one spec entry per level.
    let mut frontier: Vec<u32> = vec![0];
    for &(gr, gc) in spec {
        let mut next = Vec::with_capacity(frontier.len() * gr * gc);
        for &ni in &frontier {
            let (n_rows, n_cols, n_ro, n_co, n_level) = {
                let n = &nodes[ni as usize];
                (n.rows, n.cols, n.row_off, n.col_off, n.level)
            };
            let (br, bc) = (n_rows / gr, n_cols / gc);
            let mut children = Vec::with_capacity(gr * gc);
            for i in 0..gr {
                for j in 0..gc {
                    let idx = nodes.len() as u32;
                    nodes.push(TreeNode {
                        parent: Some(ni),
                        level: n_level + 1,
                        row_off: n_ro + i * br,
                        col_off: n_co + j * bc,
                        rows: br,
                        cols: bc,
                        grid: None,
                        children: Vec::new(),
                    });
                    children.push(idx);
                }
            }
            nodes[ni as usize].grid = Some((gr, gc));
            nodes[ni as usize].children = children.clone();
            next.extend(children);
        }
        frontier = next;
    }

    let tree = Arc::new(PartitionTree {
        id: NEXT_TREE_ID.fetch_add(1, Ordering::Relaxed),
        store: Store::new(rows, cols),
        nodes,
        levels: spec.len(),
    });
    Ok(DataHandle { tree, node: 0 })
}

impl PartitionTree {
    /// Total number of handles in the hierarchy (all levels, root included).
    pub fn handle_count(&self) -> usize {
        self.nodes.len()
    }

    /// Depth of the hierarchy: number of partition levels below the root.
    pub fn depth(&self) -> usize {
        self.levels
    }
}

impl DataHandle {
    fn node(&self) -> &TreeNode {
        &self.tree.nodes[self.node as usize]
    }

    pub fn id(&self) -> HandleId {
        HandleId {
            tree: self.tree.id,
            node: self.node,
        }
    }

    pub fn level(&self) -> usize {
        self.node().level
    }

    pub fn rows(&self) -> usize {
        self.node().rows
    }

    pub fn cols(&self) -> usize {
        self.node().cols
    }

    pub fn row_offset(&self) -> usize {
        self.node().row_off
    }

    pub fn col_offset(&self) -> usize {
        self.node().col_off
    }

    pub fn is_leaf(&self) -> bool {
        self.node().grid.is_none()
    }

    /// Hierarchy object shared by all handles of this matrix.
    pub fn tree(&self) -> &Arc<PartitionTree> {
        &self.tree
    }

    /// Grid dimensions of this region's immediate partitions, or `(0, 0)`
    /// for a leaf.
    pub fn num_partitions(&self) -> (usize, usize) {
        self.node().grid.unwrap_or((0, 0))
    }

    /// Child region at grid position `(i, j)`.
    pub fn get_partition(&self, i: usize, j: usize) -> Result<DataHandle> {
        let n = self.node();
        let (gr, gc) = n.grid.ok_or_else(|| {
            Error::Usage(format!("get_partition on leaf region {:?}", self.id()))
        })?;
        if i >= gr || j >= gc {
            return Err(Error::Usage(format!(
                "partition index ({i},{j}) out of range for {gr}x{gc} grid"
            )));
        }
        Ok(DataHandle {
            tree: Arc::clone(&self.tree),
            node: n.children[i * gc + j],
        })
    }

    pub fn parent(&self) -> Option<DataHandle> {
        self.node().parent.map(|p| DataHandle {
            tree: Arc::clone(&self.tree),
            node: p,
        })
    }

    /// Ancestor handle at `level` (may be `self`). Panics if `level`
    /// exceeds this handle's level.
    pub(crate) fn ancestor_at_level(&self, level: usize) -> DataHandle {
        assert!(level <= self.level(), "ancestor level above handle level");
        let mut cur = self.clone();
        while cur.level() > level {
            cur = cur.parent().expect("non-root handle must have a parent");
        }
        cur
    }

    /// Block coordinates of this region within the whole matrix, counted in
    /// regions of this level: `(row_off / rows, col_off / cols)`. Levels are
    /// uniform by construction, so this is the flattened grid position.
    pub fn block_coords(&self) -> (usize, usize) {
        let n = self.node();
        (n.row_off / n.rows.max(1), n.col_off / n.cols.max(1))
    }

    /// Copies this region out as a row-major buffer.
    pub fn read_region(&self) -> Vec<f64> {
        let n = self.node();
        let stride = self.tree.store.stride();
        let base = self.tree.store.base();
        let mut out = Vec::with_capacity(n.rows * n.cols);
        for r in 0..n.rows {
            let row = unsafe { base.add((n.row_off + r) * stride + n.col_off) };
            for c in 0..n.cols {
                out.push(unsafe { *row.add(c) });
            }
        }
        out
    }

    /// Overwrites this region from a row-major buffer of matching size.
    pub fn write_region(&self, data: &[f64]) -> Result<()> {
        let n = self.node();
        if data.len() != n.rows * n.cols {
            return Err(Error::Usage(format!(
                "write_region: buffer has {} elements, region is {}x{}",
                data.len(),
                n.rows,
                n.cols
            )));
        }
        let stride = self.tree.store.stride();
        let base = self.tree.store.base();
        for r in 0..n.rows {
            let row = unsafe { base.add((n.row_off + r) * stride + n.col_off) };
            for c in 0..n.cols {
                unsafe { *row.add(c) = data[r * n.cols + c] };
            }
        }
        Ok(())
    }

    /// Raw view parameters (base pointer offset to this region, dims,
    /// row stride) for kernel views.
    pub(crate) fn raw_parts(&self) -> (*mut f64, usize, usize, usize) {
        let n = self.node();
        let stride = self.tree.store.stride();
        let base = unsafe { self.tree.store.base().add(n.row_off * stride + n.col_off) };
        (base, n.rows, n.cols, stride)
    }

    /// Fills a square level-0 matrix with a seeded symmetric positive
    /// definite pattern: strictly lower entries are uniform in [-1, 1) and
    /// mirrored, diagonal entries are `n + uniform[0, 1)` (diagonally
    /// dominant, hence SPD). Same seed, same matrix.
    pub fn fill_spd(&self, seed: u64) -> Result<()> {
        if self.level() != 0 {
            return Err(Error::Usage(
                "fill_spd requires the level-0 (whole matrix) handle".into(),
            ));
        }
        let n = self.node();
        if n.rows != n.cols {
            return Err(Error::Usage(format!(
                "fill_spd requires a square matrix, got {}x{}",
                n.rows, n.cols
            )));
        }
        let dim = n.rows;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = self.tree.store.stride();
        let base = self.tree.store.base();
        let at = |r: usize, c: usize| unsafe { base.add(r * stride + c) };
        for i in 0..dim {
            for j in 0..i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                unsafe {
                    *at(i, j) = v;
                    *at(j, i) = v;
                }
            }
            let d: f64 = rng.gen_range(0.0..1.0);
            unsafe { *at(i, i) = dim as f64 + d };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_tree_has_21_handles() {
        let h = create_data(8, 8, &[(2, 2), (2, 2)]).unwrap();
        assert_eq!(h.tree().handle_count(), 21); // 1 + 4 + 16
        assert_eq!(h.tree().depth(), 2);
        assert_eq!(h.num_partitions(), (2, 2));
        assert!(!h.is_leaf());
        let child = h.get_partition(1, 0).unwrap();
        assert_eq!(child.level(), 1);
        assert_eq!((child.rows(), child.cols()), (4, 4));
        assert_eq!((child.row_offset(), child.col_offset()), (4, 0));
        let leaf = child.get_partition(0, 1).unwrap();
        assert!(leaf.is_leaf());
        assert_eq!(leaf.num_partitions(), (0, 0));
        assert_eq!((leaf.rows(), leaf.cols()), (2, 2));
        assert_eq!((leaf.row_offset(), leaf.col_offset()), (4, 2));
        assert_eq!(leaf.block_coords(), (2, 1));
    }

    #[test]
    fn ragged_partition_is_rejected() {
        let err = create_data(64, 64, &[(3, 3)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
        // Raggedness at the second level is also caught.
        let err = create_data(8, 8, &[(2, 2), (3, 3)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn leaf_partition_access_is_usage_error() {
        let h = create_data(4, 4, &[(2, 2)]).unwrap();
        let leaf = h.get_partition(0, 0).unwrap();
        assert!(matches!(leaf.get_partition(0, 0), Err(Error::Usage(_))));
        assert!(matches!(h.get_partition(2, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn regions_tile_without_overlap() {
        // Every level's regions must exactly tile the matrix.
        let h = create_data(12, 12, &[(2, 3), (2, 1)]).unwrap();
        for level in 1..=2 {
            let mut covered = vec![false; 12 * 12];
            let mut stack = vec![h.clone()];
            while let Some(cur) = stack.pop() {
                if cur.level() == level {
                    for r in cur.row_offset()..cur.row_offset() + cur.rows() {
                        for c in cur.col_offset()..cur.col_offset() + cur.cols() {
                            assert!(!covered[r * 12 + c], "overlap at ({r},{c})");
                            covered[r * 12 + c] = true;
                        }
                    }
                } else if cur.level() < level {
                    let (gr, gc) = cur.num_partitions();
                    for i in 0..gr {
                        for j in 0..gc {
                            stack.push(cur.get_partition(i, j).unwrap());
                        }
                    }
                }
            }
            assert!(covered.iter().all(|&b| b), "level {level} does not tile");
        }
    }

    #[test]
    fn read_write_region_roundtrip() {
        let h = create_data(4, 6, &[(2, 3)]).unwrap();
        let block = h.get_partition(1, 2).unwrap();
        block.write_region(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(block.read_region(), vec![1.0, 2.0, 3.0, 4.0]);
        // The write landed at the right global offsets.
        let all = h.read_region();
        assert_eq!(all[2 * 6 + 4], 1.0);
        assert_eq!(all[2 * 6 + 5], 2.0);
        assert_eq!(all[3 * 6 + 4], 3.0);
        assert_eq!(all[3 * 6 + 5], 4.0);
        // Neighbouring cells untouched.
        assert_eq!(all[0], 0.0);
        assert!(matches!(
            block.write_region(&[0.0; 3]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn fill_spd_is_deterministic_symmetric_and_dominant() {
        let a = create_data(16, 16, &[(2, 2)]).unwrap();
        let b = create_data(16, 16, &[(4, 4)]).unwrap();
        a.fill_spd(7).unwrap();
        b.fill_spd(7).unwrap();
        let (va, vb) = (a.read_region(), b.read_region());
        assert_eq!(va, vb, "same seed must give identical matrices");
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(va[i * 16 + j], va[j * 16 + i]);
                if i != j {
                    assert!(va[i * 16 + j].abs() < 1.0);
                }
            }
            assert!(va[i * 16 + i] >= 16.0);
        }
        let c = create_data(16, 16, &[(2, 2)]).unwrap();
        c.fill_spd(8).unwrap();
        assert_ne!(va, c.read_region(), "different seeds should differ");
    }

    #[test]
    fn fill_spd_rejects_non_root_and_non_square() {
        let h = create_data(8, 8, &[(2, 2)]).unwrap();
        let child = h.get_partition(0, 0).unwrap();
        assert!(matches!(child.fill_spd(1), Err(Error::Usage(_))));
        let rect = create_data(4, 8, &[(2, 2)]).unwrap();
        assert!(matches!(rect.fill_spd(1), Err(Error::Usage(_))));
    }

    #[test]
    fn ancestor_walk_and_ids() {
        let h = create_data(8, 8, &[(2, 2), (2, 2)]).unwrap();
        let leaf = h
            .get_partition(1, 1)
            .unwrap()
            .get_partition(0, 1)
            .unwrap();
        assert_eq!(leaf.ancestor_at_level(1), h.get_partition(1, 1).unwrap());
        assert_eq!(leaf.ancestor_at_level(2), leaf);
        assert_eq!(leaf.ancestor_at_level(0), h);
        // Handles on different trees never compare equal.
        let other = create_data(8, 8, &[(2, 2), (2, 2)]).unwrap();
        assert_ne!(h, other);
        assert_ne!(h.id(), other.id());
    }
}
