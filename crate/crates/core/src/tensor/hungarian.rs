use crate::error::{invalid, Result};
use crate::tensor::matrix::Matrix;

/// Minimum-cost perfect assignment. Returns `perm` with row `i` assigned to
/// column `perm[i]`.
///
/// Shortest augmenting paths with row/column potentials, `O(n³)`.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(invalid(format!("hungarian needs a square cost, got {:?}", cost.shape())));
    }
    if !cost.is_finite() {
        return Err(invalid("hungarian cost has non-finite entries"));
    }
    let n = cost.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
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
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

pub fn assignment_cost(cost: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}
