//! Linear assignment and correlation.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Optimal assignment for a square cost matrix (O(n³) shortest augmenting
/// paths with potentials). Returns `(assignment, total)` where row `i` is
/// matched to column `assignment[i]`.
fn solve_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based arrays with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i * n + assign[i]]).sum();
    (assign, total)
}

/// Minimum-cost permutation: `perm[i]` is the column matched to row `i`.
/// Among optimal permutations (costs equal to within 1e-12 relative) the
/// lexicographically smallest is returned.
pub fn hungarian(cost: &Matrix<f64>) -> Vec<usize> {
    assert!(cost.is_square(), "hungarian needs a square cost matrix");
    let n = cost.rows();
    let (_, best) = solve_assignment(cost.as_slice(), n);
    let tol = 1e-12 * (1.0 + best.abs()) + 1e-12 * cost.max_abs() * n as f64;
    let mut perm = Vec::with_capacity(n);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut fixed = 0.0;
    for i in 0..n {
        // rows[0] == i here; try the smallest free column first
        let k = cols.len();
        let mut chosen = None;
        for (ci, &c) in cols.iter().enumerate() {
            let sub_rows = &rows[1..];
            let sub_cols: Vec<usize> = cols.iter().enumerate().filter(|&(x, _)| x != ci).map(|(_, &c)| c).collect();
            let mut sub = Vec::with_capacity((k - 1) * (k - 1));
            for &r in sub_rows {
                for &cc in &sub_cols {
                    sub.push(cost[(r, cc)]);
                }
            }
            let (_, rest) = solve_assignment(&sub, k - 1);
            if fixed + cost[(i, c)] + rest <= best + tol {
                chosen = Some((ci, c));
                break;
            }
        }
        let (ci, c) = chosen.expect("an optimal completion exists");
        fixed += cost[(i, c)];
        perm.push(c);
        cols.remove(ci);
        rows.remove(0);
    }
    perm
}

/// Sample Pearson correlation, clamped to [−1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidDims(format!("pearson needs equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first argument".into()));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second argument".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
