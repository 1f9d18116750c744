//! Hierarchical matrix engine.
//!
//! Geometric cluster trees over point sets, an η-admissibility block
//! partition, adaptive cross approximation of admissible blocks and dense
//! storage of the rest, and a compressed matrix-vector product. Block
//! assembly runs in parallel over leaves; the matvec accumulates per-leaf
//! partial results in a fixed leaf order, so results do not depend on the
//! thread count.

mod aca;

pub use aca::{adaptive_cross, CrossApproximation};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HmatError {
    #[error("cluster tree needs at least one point")]
    NoPoints,
    #[error("matvec dimension mismatch: vector has {got}, matrix expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid parameters: {0}")]
    BadParameters(String),
}

/// Entry-evaluation callback for block assembly. Indices are in the
/// caller's (original) numbering; implementations must be pure, since
/// evaluation happens concurrently from many threads.
pub trait Kernel: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn eval(&self, i: usize, j: usize) -> f64;
}

/// Binary geometric cluster tree over a point set. Each node owns a
/// contiguous range of the permuted index array.
pub struct ClusterTree {
    points: Vec<Point3<f64>>,
    perm: Vec<u32>,
    nodes: Vec<ClusterNode>,
}

#[derive(Debug, Clone)]
pub struct ClusterNode {
    pub start: u32,
    pub end: u32,
    pub center: Point3<f64>,
    pub radius: f64,
    pub children: Option<(u32, u32)>,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Build a cluster tree by median bisection along the axis of largest
/// extent. Deterministic for a fixed input order: ties in the sort are
/// broken by index.
pub fn build_cluster_tree(points: &[Point3<f64>], leaf_max: usize) -> Result<ClusterTree, HmatError> {
    if points.is_empty() {
        return Err(HmatError::NoPoints);
    }
    let leaf_max = leaf_max.max(1);
    let mut perm: Vec<u32> = (0..points.len() as u32).collect();
    let mut nodes = Vec::new();
    build_node(points, &mut perm, 0, points.len(), leaf_max, &mut nodes);
    Ok(ClusterTree {
        points: points.to_vec(),
        perm,
        nodes,
    })
}

fn build_node(
    points: &[Point3<f64>],
    perm: &mut Vec<u32>,
    start: usize,
    end: usize,
    leaf_max: usize,
    nodes: &mut Vec<ClusterNode>,
) -> u32 {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &idx in &perm[start..end] {
        let p = &points[idx as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let center = Point3::from((lo.coords + hi.coords) * 0.5);
    let mut radius = 0.0f64;
    for &idx in &perm[start..end] {
        radius = radius.max((points[idx as usize] - center).norm());
    }

    let me = nodes.len() as u32;
    nodes.push(ClusterNode {
        start: start as u32,
        end: end as u32,
        center,
        radius,
        children: None,
    });

    let len = end - start;
    if len > leaf_max {
        let mut axis = 0;
        let mut extent = hi[0] - lo[0];
        for k in 1..3 {
            if hi[k] - lo[k] > extent {
                extent = hi[k] - lo[k];
                axis = k;
            }
        }
        perm[start..end].sort_unstable_by(|&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let mid = start + len / 2;
        let left = build_node(points, perm, start, mid, leaf_max, nodes);
        let right = build_node(points, perm, mid, end, leaf_max, nodes);
        nodes[me as usize].children = Some((left, right));
    }
    me
}

impl ClusterTree {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn node(&self, i: u32) -> &ClusterNode {
        &self.nodes[i as usize]
    }

    /// Original index at a permuted position.
    pub fn original_index(&self, pos: usize) -> usize {
        self.perm[pos] as usize
    }

    pub fn depth(&self) -> usize {
        fn rec(tree: &ClusterTree, node: u32) -> usize {
            match tree.nodes[node as usize].children {
                None => 1,
                Some((l, r)) => 1 + rec(tree, l).max(rec(tree, r)),
            }
        }
        rec(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_none()).count()
    }
}

/// Admissibility and accuracy parameters of the block partition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HmatParams {
    /// A block is compressed when max(R₁, R₂) < η·|c₁ − c₂|.
    pub eta: f64,
    /// Relative Frobenius target of the cross approximation.
    pub epsilon: f64,
    /// Cluster tree leaf size.
    pub leaf_max: usize,
}

impl Default for HmatParams {
    fn default() -> Self {
        Self {
            eta: 10.0,
            epsilon: 1e-3,
            leaf_max: 64,
        }
    }
}

enum LeafData {
    Dense(Vec<f64>),
    /// u: m × r, v: r × n, both row-major. Rank 0 encodes a zero block.
    LowRank { rank: usize, u: Vec<f64>, v: Vec<f64> },
}

struct Leaf {
    row_start: usize,
    row_end: usize,
    col_start: usize,
    col_end: usize,
    data: LeafData,
    /// true when the block satisfied the admissibility condition (it may
    /// still be stored densely if the cross approximation hit its rank cap)
    admissible: bool,
}

/// Hierarchically compressed matrix over a row and a column cluster tree.
pub struct HMatrix {
    nrows: usize,
    ncols: usize,
    row_perm: Vec<u32>,
    col_perm: Vec<u32>,
    leaves: Vec<Leaf>,
    params: HmatParams,
}

/// Storage summary of a compressed matrix.
#[derive(Debug, Clone, Serialize)]
pub struct CompressionStats {
    pub nrows: usize,
    pub ncols: usize,
    pub stored_entries: u64,
    pub dense_equivalent: u64,
    pub ratio: f64,
    pub lowrank_leaves: usize,
    pub dense_leaves: usize,
    /// admissible blocks that fell back to dense storage
    pub aca_fallbacks: usize,
    pub max_rank: usize,
}

/// One leaf rectangle of the block partition, in permuted coordinates;
/// rank is `None` for dense leaves.
#[derive(Debug, Clone, Serialize)]
pub struct BlockInfo {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub rank: Option<usize>,
}

/// Build the compressed matrix for `kernel` over the given cluster trees.
pub fn build_hmatrix<K: Kernel>(
    rows: &ClusterTree,
    cols: &ClusterTree,
    kernel: &K,
    params: HmatParams,
) -> Result<HMatrix, HmatError> {
    if rows.len() != kernel.nrows() || cols.len() != kernel.ncols() {
        return Err(HmatError::BadParameters(format!(
            "kernel is {}x{} but trees span {}x{}",
            kernel.nrows(),
            kernel.ncols(),
            rows.len(),
            cols.len()
        )));
    }
    if !(params.eta > 0.0) || !(params.epsilon > 0.0) {
        return Err(HmatError::BadParameters(
            "eta and epsilon must be positive".into(),
        ));
    }

    // Build leaves by parallel recursion over the block tree. An admissible
    // block whose cross approximation hits its rank cap is split and its
    // quadrants are retried, so dense storage only ever happens at
    // leaf-by-leaf granularity and large near blocks never assemble densely.
    let mut leaves = build_blocks(rows, cols, kernel, params, 0, 0);
    leaves.sort_unstable_by_key(|l| (l.row_start, l.col_start, l.row_end, l.col_end));

    Ok(HMatrix {
        nrows: rows.len(),
        ncols: cols.len(),
        row_perm: rows.perm.clone(),
        col_perm: cols.perm.clone(),
        leaves,
        params,
    })
}

fn build_blocks<K: Kernel>(
    rows: &ClusterTree,
    cols: &ClusterTree,
    kernel: &K,
    params: HmatParams,
    r: u32,
    c: u32,
) -> Vec<Leaf> {
    let rn = rows.node(r);
    let cn = cols.node(c);
    let dist = (rn.center - cn.center).norm();
    let admissible = rn.radius.max(cn.radius) < params.eta * dist;
    let splittable = rn.children.is_some() || cn.children.is_some();

    if admissible {
        let (m, n) = (rn.len(), cn.len());
        let row_of = |i: usize| rows.perm[rn.start as usize + i] as usize;
        let col_of = |j: usize| cols.perm[cn.start as usize + j] as usize;
        let entry = |i: usize, j: usize| kernel.eval(row_of(i), col_of(j));
        if let Some(cross) = adaptive_cross(m, n, &entry, params.epsilon) {
            return vec![Leaf {
                row_start: rn.start as usize,
                row_end: rn.end as usize,
                col_start: cn.start as usize,
                col_end: cn.end as usize,
                data: LeafData::LowRank {
                    rank: cross.rank,
                    u: cross.u,
                    v: cross.v,
                },
                admissible: true,
            }];
        }
        if !splittable {
            return vec![Leaf {
                row_start: rn.start as usize,
                row_end: rn.end as usize,
                col_start: cn.start as usize,
                col_end: cn.end as usize,
                data: LeafData::Dense(dense_block(m, n, &entry)),
                admissible: true,
            }];
        }
        // fall through: split the failed block
    } else if !splittable {
        let (m, n) = (rn.len(), cn.len());
        let row_of = |i: usize| rows.perm[rn.start as usize + i] as usize;
        let col_of = |j: usize| cols.perm[cn.start as usize + j] as usize;
        let entry = |i: usize, j: usize| kernel.eval(row_of(i), col_of(j));
        return vec![Leaf {
            row_start: rn.start as usize,
            row_end: rn.end as usize,
            col_start: cn.start as usize,
            col_end: cn.end as usize,
            data: LeafData::Dense(dense_block(m, n, &entry)),
            admissible: false,
        }];
    }

    // descend: quadrants when both clusters split, halves otherwise; a
    // lopsided pair splits only its larger side
    let pairs: Vec<(u32, u32)> = match (rn.children, cn.children) {
        (Some((rl, rr)), None) => vec![(rl, c), (rr, c)],
        (None, Some((cl, cr))) => vec![(r, cl), (r, cr)],
        (Some((rl, rr)), Some((cl, cr))) => {
            let (nr, nc) = (rn.len(), cn.len());
            if nr > 2 * nc {
                vec![(rl, c), (rr, c)]
            } else if nc > 2 * nr {
                vec![(r, cl), (r, cr)]
            } else {
                vec![(rl, cl), (rl, cr), (rr, cl), (rr, cr)]
            }
        }
        (None, None) => unreachable!("leaf pairs handled above"),
    };
    pairs
        .into_par_iter()
        .map(|(pr, pc)| build_blocks(rows, cols, kernel, params, pr, pc))
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        })
}

fn dense_block(m: usize, n: usize, entry: &dyn Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[i * n + j] = entry(i, j);
        }
    }
    data
}

impl HMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn params(&self) -> HmatParams {
        self.params
    }

    /// y = H·x. Per-leaf products run in parallel; their contributions are
    /// accumulated sequentially in leaf order, so the result is independent
    /// of the thread count.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, HmatError> {
        if x.len() != self.ncols {
            return Err(HmatError::DimensionMismatch {
                got: x.len(),
                expected: self.ncols,
            });
        }
        // gather into column-permuted layout
        let xp: Vec<f64> = self.col_perm.iter().map(|&j| x[j as usize]).collect();

        let partials: Vec<Vec<f64>> = self
            .leaves
            .par_iter()
            .map(|leaf| leaf.apply(&xp))
            .collect();

        let mut yp = vec![0.0; self.nrows];
        for (leaf, part) in self.leaves.iter().zip(&partials) {
            for (k, &v) in part.iter().enumerate() {
                yp[leaf.row_start + k] += v;
            }
        }

        // scatter back to original ordering
        let mut y = vec![0.0; self.nrows];
        for (pos, &i) in self.row_perm.iter().enumerate() {
            y[i as usize] = yp[pos];
        }
        Ok(y)
    }

    pub fn stats(&self) -> CompressionStats {
        let mut stored = 0u64;
        let mut lowrank = 0usize;
        let mut dense = 0usize;
        let mut fallbacks = 0usize;
        let mut max_rank = 0usize;
        for leaf in &self.leaves {
            let m = (leaf.row_end - leaf.row_start) as u64;
            let n = (leaf.col_end - leaf.col_start) as u64;
            match &leaf.data {
                LeafData::Dense(_) => {
                    stored += m * n;
                    dense += 1;
                    if leaf.admissible {
                        fallbacks += 1;
                    }
                }
                LeafData::LowRank { rank, .. } => {
                    stored += *rank as u64 * (m + n);
                    lowrank += 1;
                    max_rank = max_rank.max(*rank);
                }
            }
        }
        let dense_equivalent = self.nrows as u64 * self.ncols as u64;
        CompressionStats {
            nrows: self.nrows,
            ncols: self.ncols,
            stored_entries: stored,
            dense_equivalent,
            ratio: dense_equivalent as f64 / stored.max(1) as f64,
            lowrank_leaves: lowrank,
            dense_leaves: dense,
            aca_fallbacks: fallbacks,
            max_rank,
        }
    }

    /// Leaf rectangles with ranks, for block-structure dumps.
    pub fn block_layout(&self) -> Vec<BlockInfo> {
        self.leaves
            .iter()
            .map(|leaf| BlockInfo {
                row_start: leaf.row_start,
                row_end: leaf.row_end,
                col_start: leaf.col_start,
                col_end: leaf.col_end,
                rank: match &leaf.data {
                    LeafData::Dense(_) => None,
                    LeafData::LowRank { rank, .. } => Some(*rank),
                },
            })
            .collect()
    }

    /// Total index pairs covered by leaves; equals nrows·ncols exactly when
    /// the partition tiles the matrix.
    pub fn tiled_pairs(&self) -> u64 {
        self.leaves
            .iter()
            .map(|l| ((l.row_end - l.row_start) as u64) * ((l.col_end - l.col_start) as u64))
            .sum()
    }
}

impl Leaf {
    fn apply(&self, xp: &[f64]) -> Vec<f64> {
        let m = self.row_end - self.row_start;
        let n = self.col_end - self.col_start;
        let xs = &xp[self.col_start..self.col_end];
        let mut out = vec![0.0; m];
        match &self.data {
            LeafData::Dense(a) => {
                for i in 0..m {
                    let row = &a[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += row[j] * xs[j];
                    }
                    out[i] = acc;
                }
            }
            LeafData::LowRank { rank, u, v } => {
                if *rank == 0 {
                    return out;
                }
                let r = *rank;
                let mut tmp = vec![0.0; r];
                for l in 0..r {
                    let vrow = &v[l * n..(l + 1) * n];
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += vrow[j] * xs[j];
                    }
                    tmp[l] = acc;
                }
                for i in 0..m {
                    let urow = &u[i * r..(i + 1) * r];
                    let mut acc = 0.0;
                    for l in 0..r {
                        acc += urow[l] * tmp[l];
                    }
                    out[i] = acc;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct FnKernel<F: Fn(usize, usize) -> f64 + Sync> {
        m: usize,
        n: usize,
        f: F,
    }

    impl<F: Fn(usize, usize) -> f64 + Sync> Kernel for FnKernel<F> {
        fn nrows(&self) -> usize {
            self.m
        }
        fn ncols(&self) -> usize {
            self.n
        }
        fn eval(&self, i: usize, j: usize) -> f64 {
            (self.f)(i, j)
        }
    }

    fn grid_points(n: usize) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(Point3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        pts
    }

    #[test]
    fn single_point_tree() {
        let tree = build_cluster_tree(&[Point3::new(1.0, 2.0, 3.0)], 8).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.root().radius, 0.0);
    }

    #[test]
    fn two_distant_points_split() {
        let tree = build_cluster_tree(
            &[Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 0.0, 0.0)],
            1,
        )
        .unwrap();
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.leaf_count(), 2);
    }

    #[test]
    fn balanced_depth_of_uniform_grid() {
        let pts = grid_points(10); // 1000 points
        let tree = build_cluster_tree(&pts, 64).unwrap();
        // ceil(log2(1000/64)) + 1 = 5 levels under median bisection
        assert_eq!(tree.depth(), 5);
    }

    #[test]
    fn children_partition_parent() {
        let pts = grid_points(6);
        let tree = build_cluster_tree(&pts, 16).unwrap();
        for node in &tree.nodes {
            if let Some((l, r)) = node.children {
                let ln = tree.node(l);
                let rn = tree.node(r);
                assert_eq!(ln.start, node.start);
                assert_eq!(ln.end, rn.start);
                assert_eq!(rn.end, node.end);
            }
            // radius covers every owned point
            for pos in node.start..node.end {
                let p = &tree.points[tree.perm[pos as usize] as usize];
                assert!((p - node.center).norm() <= node.radius + 1e-12);
            }
        }
        // perm is a permutation
        let mut seen = vec![false; pts.len()];
        for &i in &tree.perm {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
    }

    fn decay_kernel(pts: &[Point3<f64>]) -> impl Fn(usize, usize) -> f64 + Sync + '_ {
        move |i: usize, j: usize| {
            let d = (pts[i] - pts[j]).norm();
            (-0.3 * d).exp() / (1.0 + d * d)
        }
    }

    #[test]
    fn hmatrix_matches_dense_matvec() {
        let pts = grid_points(7); // 343 points
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 24).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: decay_kernel(&pts),
        };
        let params = HmatParams {
            eta: 10.0,
            epsilon: 1e-4,
            leaf_max: 24,
        };
        let h = build_hmatrix(&tree, &tree, &kernel, params).unwrap();
        assert_eq!(h.tiled_pairs(), (n * n) as u64);

        let mut state = 42u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let y = h.matvec(&x).unwrap();
            let mut y_dense = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += kernel.eval(i, j) * x[j];
                }
                y_dense[i] = acc;
            }
            let num: f64 = y
                .iter()
                .zip(&y_dense)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = y_dense.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(num <= 10.0 * params.epsilon * den, "rel err {}", num / den);
        }
    }

    #[test]
    fn rank_one_kernel_compresses_to_rank_one_leaves() {
        let pts = grid_points(5);
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 16).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: |i, j| (1.0 + i as f64) * (2.0 + j as f64) * 1e-3,
        };
        let h = build_hmatrix(&tree, &tree, &kernel, HmatParams::default()).unwrap();
        let stats = h.stats();
        assert!(stats.max_rank <= 2);
        assert!(stats.ratio > 1.0);
    }

    #[test]
    fn eta_zero_like_forces_dense() {
        // a tiny eta makes nothing admissible: every leaf dense, ratio 1
        let pts = grid_points(4);
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 8).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: decay_kernel(&pts),
        };
        let params = HmatParams {
            eta: 1e-12,
            epsilon: 1e-3,
            leaf_max: 8,
        };
        let h = build_hmatrix(&tree, &tree, &kernel, params).unwrap();
        let stats = h.stats();
        assert_eq!(stats.lowrank_leaves, 0);
        assert_relative_eq!(stats.ratio, 1.0);
    }

    #[test]
    fn matvec_identity_like_diagonal() {
        let pts = grid_points(4);
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 8).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: |i, j| if i == j { 1.0 } else { 0.0 },
        };
        let h = build_hmatrix(&tree, &tree, &kernel, HmatParams::default()).unwrap();
        for k in [0usize, 7, n - 1] {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let y = h.matvec(&e).unwrap();
            for (i, &v) in y.iter().enumerate() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10);
            }
        }
        // zero maps to zero
        let z = h.matvec(&vec![0.0; n]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matvec_is_linear() {
        let pts = grid_points(5);
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 16).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: decay_kernel(&pts),
        };
        let h = build_hmatrix(&tree, &tree, &kernel, HmatParams::default()).unwrap();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let (alpha, beta) = (0.37, -1.25);
        let combo: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let lhs = h.matvec(&combo).unwrap();
        let hu = h.matvec(&u).unwrap();
        let hv = h.matvec(&v).unwrap();
        for i in 0..n {
            let rhs = alpha * hu[i] + beta * hv[i];
            assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let pts = grid_points(3);
        let n = pts.len();
        let tree = build_cluster_tree(&pts, 8).unwrap();
        let kernel = FnKernel {
            m: n,
            n,
            f: |_, _| 1.0,
        };
        let h = build_hmatrix(&tree, &tree, &kernel, HmatParams::default()).unwrap();
        assert!(matches!(
            h.matvec(&vec![0.0; n + 1]),
            Err(HmatError::DimensionMismatch { .. })
        ));
    }
}
