//! Symmetrized metrics: Wasserstein distances between empirical measures,
//! cut norm and its operator-norm bracket, Hausdorff distance and the third
//! lower bound on the Gromov–Wasserstein distance.
//!
//! The symmetrized cut distance (an infimum over measure-preserving
//! relabelings) has no exact evaluator here; only [`cut_bounds`] on the
//! unaligned difference is exposed.

mod cloud;
mod cut;
mod wasserstein;

pub use cloud::{gw_tlb, hausdorff, sym_dist_cloud, SymDistEstimate, DEFAULT_RESTARTS, TLB_MAX_N};
pub use cut::{cut_bounds, cut_norm_exact, graph_op2, CutBounds, CUT_EXACT_MAX_N};
pub use wasserstein::{
    pairwise_distances, wasserstein_1d, wasserstein_assign, EmpiricalMeasure, LCM_CAP_1D, LCM_CAP_ASSIGN,
};

/// Literal `inf` over all relabelings of `B` of the graph operator 2-norm of
/// `(A − πBπᵀ, X − πY)`. Factorial cost; for cross-checking on `n ≤ 7`.
pub fn graph_op2_aligned_exhaustive(
    a: &crate::Matrix,
    x: &crate::Matrix,
    b: &crate::Matrix,
    y: &crate::Matrix,
) -> crate::Result<f64> {
    let n = a.rows();
    if n > 7 || b.rows() != n {
        return Err(crate::error::invalid("exhaustive alignment needs equal sizes n <= 7"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    loop {
        let pb = crate::Matrix::from_fn(n, n, |i, j| b[(perm[i], perm[j])]);
        let py = y.select_rows(&perm);
        best = best.min(graph_op2(&a.sub(&pb), &x.sub(&py))?);
        if !next_permutation(&mut perm) {
            return Ok(best);
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
