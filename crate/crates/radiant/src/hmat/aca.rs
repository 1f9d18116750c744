//! Partially pivoted adaptive cross approximation.
//!
//! Builds a low-rank factorization A ≈ U·V from a small number of matrix
//! rows and columns, without ever assembling the block. The stopping rule
//! compares the newest cross against the Frobenius norm of the accumulated
//! approximation, maintained by the usual recurrence.

/// Result of a successful cross approximation: A ≈ U·V with U of shape
/// (m, r) and V of shape (r, n), both stored row-major.
pub struct CrossApproximation {
    pub rank: usize,
    /// m × r, column l is the l-th cross column.
    pub u: Vec<f64>,
    /// r × n, row l is the l-th cross row.
    pub v: Vec<f64>,
}

/// Run partially pivoted ACA on an m × n block.
///
/// `entry(i, j)` evaluates the block entry in local coordinates. Returns
/// `None` when the rank would exceed min(m, n)/2, in which case the caller
/// should store the block densely. Pivot rows whose residual is below
/// 1e-14 of the largest entry seen are skipped.
///
/// Partial pivoting only ever looks where its walk leads it, so the
/// Frobenius stopping rule alone can fire with a whole geometric subregion
/// of the block unexplored (the kernel varies by orders of magnitude over
/// weakly admissible blocks). Before accepting convergence, residual rows
/// strided across the unused row set are probed; a probe above tolerance
/// restarts the iteration from the offending row.
pub fn adaptive_cross(
    m: usize,
    n: usize,
    entry: &dyn Fn(usize, usize) -> f64,
    epsilon: f64,
) -> Option<CrossApproximation> {
    let max_rank = (m.min(n) / 2).max(1);

    let mut u_cols: Vec<Vec<f64>> = Vec::new();
    let mut v_rows: Vec<Vec<f64>> = Vec::new();
    let mut used_row = vec![false; m];
    let mut used_col = vec![false; n];
    let mut norm2 = 0.0f64; // ||U V||_F^2 via the recurrence
    let mut max_abs = 0.0f64;
    let mut small_streak = 0u32;

    // the recurrence controls a surrogate of the true residual; the extra
    // margin keeps realized block errors within the user tolerance
    let stop_factor = 0.25 * epsilon;

    let residual_row = |pivot_row: usize, u_cols: &[Vec<f64>], v_rows: &[Vec<f64>]| -> Vec<f64> {
        let mut row: Vec<f64> = (0..n).map(|j| entry(pivot_row, j)).collect();
        for (uc, vr) in u_cols.iter().zip(v_rows) {
            let f = uc[pivot_row];
            if f != 0.0 {
                for j in 0..n {
                    row[j] -= f * vr[j];
                }
            }
        }
        row
    };

    // starting pivot: the row with the largest-magnitude entry in the first
    // residual column (the residual is A itself at this point)
    let mut pivot_row = 0usize;
    {
        let mut best = -1.0;
        for i in 0..m {
            let a = entry(i, 0).abs();
            max_abs = max_abs.max(a);
            if a > best {
                best = a;
                pivot_row = i;
            }
        }
    }

    loop {
        if u_cols.len() >= max_rank {
            return None;
        }

        let mut row = residual_row(pivot_row, &u_cols, &v_rows);
        for &x in &row {
            max_abs = max_abs.max(x.abs());
        }

        // column pivot: largest residual among unused columns
        let mut pivot_col = usize::MAX;
        let mut best = 0.0;
        for (j, &x) in row.iter().enumerate() {
            if !used_col[j] && x.abs() > best {
                best = x.abs();
                pivot_col = j;
            }
        }
        used_row[pivot_row] = true;

        let tiny = 1e-14 * max_abs.max(1e-300);
        if pivot_col == usize::MAX || best <= tiny {
            // dead row: try the next unused one, or accept what we have
            match used_row.iter().position(|&u| !u) {
                Some(next) => {
                    pivot_row = next;
                    continue;
                }
                None => break,
            }
        }

        let pivot = row[pivot_col];
        for j in 0..n {
            row[j] /= pivot;
        }

        // residual column at pivot_col
        let mut col: Vec<f64> = (0..m).map(|i| entry(i, pivot_col)).collect();
        for (uc, vr) in u_cols.iter().zip(&v_rows) {
            let f = vr[pivot_col];
            if f != 0.0 {
                for i in 0..m {
                    col[i] -= f * uc[i];
                }
            }
        }
        used_col[pivot_col] = true;

        // Frobenius recurrence for ||sum_l u_l v_l||^2
        let u_norm2: f64 = col.iter().map(|x| x * x).sum();
        let v_norm2: f64 = row.iter().map(|x| x * x).sum();
        let mut cross_terms = 0.0;
        for (uc, vr) in u_cols.iter().zip(&v_rows) {
            let uu: f64 = uc.iter().zip(&col).map(|(a, b)| a * b).sum();
            let vv: f64 = vr.iter().zip(&row).map(|(a, b)| a * b).sum();
            cross_terms += uu * vv;
        }
        norm2 += 2.0 * cross_terms + u_norm2 * v_norm2;

        // next pivot row before moving the buffers
        let mut next_row = usize::MAX;
        let mut next_best = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if !used_row[i] && x.abs() > next_best {
                next_best = x.abs();
                next_row = i;
            }
        }

        let update = (u_norm2 * v_norm2).sqrt();
        u_cols.push(col);
        v_rows.push(row);

        if update <= stop_factor * norm2.max(0.0).sqrt() {
            // fire only on two consecutive small updates; a single one can
            // be a pivot landing in a locally small region of the block
            small_streak += 1;
            if small_streak >= 2 || u_cols.len() >= m.min(n) {
                match worst_probe_row(
                    m,
                    &used_row,
                    &u_cols,
                    &v_rows,
                    &residual_row,
                    stop_factor * norm2.max(0.0).sqrt(),
                ) {
                    Some(bad) => {
                        // unexplored region found: continue from there
                        small_streak = 0;
                        pivot_row = bad;
                        continue;
                    }
                    None => break,
                }
            }
        } else {
            small_streak = 0;
        }

        if next_row == usize::MAX {
            break;
        }
        pivot_row = next_row;
    }

    let rank = u_cols.len();
    let mut u = vec![0.0; m * rank];
    let mut v = vec![0.0; rank * n];
    for (l, uc) in u_cols.iter().enumerate() {
        for i in 0..m {
            u[i * rank + l] = uc[i];
        }
    }
    for (l, vr) in v_rows.iter().enumerate() {
        v[l * n..(l + 1) * n].copy_from_slice(vr);
    }
    Some(CrossApproximation { rank, u, v })
}

/// Probe residual rows strided across the unused set; returns the worst
/// offender whose residual two-norm still exceeds `threshold` (scaled to a
/// per-row share of the Frobenius budget).
fn worst_probe_row(
    m: usize,
    used_row: &[bool],
    u_cols: &[Vec<f64>],
    v_rows: &[Vec<f64>],
    residual_row: &dyn Fn(usize, &[Vec<f64>], &[Vec<f64>]) -> Vec<f64>,
    threshold: f64,
) -> Option<usize> {
    let unused: Vec<usize> = (0..m).filter(|&i| !used_row[i]).collect();
    if unused.is_empty() {
        return None;
    }
    let probes = (m / 16).clamp(4, 32).min(unused.len());
    let per_row_budget = threshold / (m as f64).sqrt();
    let mut worst: Option<(f64, usize)> = None;
    for k in 0..probes {
        let i = unused[k * unused.len() / probes];
        let row = residual_row(i, u_cols, v_rows);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > per_row_budget && worst.map_or(true, |(w, _)| norm > w) {
            worst = Some((norm, i));
        }
    }
    worst.map(|(_, i)| i)
}
