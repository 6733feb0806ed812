//! Minimum-cost bipartite assignment via the Hungarian method, using the
//! shortest-augmenting-path formulation with dual potentials. Runs in
//! O(n^3) for an n x n cost matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solve the square assignment problem: returns the permutation `pi`
/// minimizing `sum_i cost[(i, pi[i])]`, together with that minimal total.
pub fn hungarian_assignment(cost: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if n == 0 || cost.ncols() != n {
        return Err(Error::ShapeMismatch {
            context: "hungarian_assignment",
            expected: "non-empty square matrix".into(),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment costs"));
    }

    // 1-based internally; index 0 is the sentinel column/row.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    // p[j] = row currently assigned to column j (0 = none).
    let mut p = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
        // Augment along the found path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0_usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[(i, perm[i])]).sum();
    Ok((perm, total))
}
