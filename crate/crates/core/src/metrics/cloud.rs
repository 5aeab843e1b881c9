use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistent::random_orthogonal;
use crate::error::{invalid, Error, Result};
use crate::metrics::wasserstein::{capped_lcm, pairwise_distances, wasserstein_1d, LCM_CAP_ASSIGN};
use crate::tensor::{assignment_cost, hungarian, rng_streams, svd, Matrix};

/// Largest cloud size accepted by [`gw_tlb`].
pub const TLB_MAX_N: usize = 300;
pub const DEFAULT_RESTARTS: usize = 16;

fn check_clouds(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(invalid("point clouds must be nonempty"));
    }
    if x.cols() != y.cols() {
        return Err(invalid(format!("clouds live in R^{} and R^{}", x.cols(), y.cols())));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(invalid("point cloud has non-finite coordinates"));
    }
    Ok(())
}

/// Hausdorff distance between the row sets of `x` and `y` (Euclidean).
pub fn hausdorff(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_clouds(x, y)?;
    let d = pairwise_distances(x, y);
    let directed_xy = (0..d.rows())
        .map(|i| d.row(i).iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let directed_yx = (0..d.cols())
        .map(|j| (0..d.rows()).map(|i| d[(i, j)]).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(directed_xy.max(directed_yx))
}

/// Upper estimate of `inf_{h ∈ O(k)} W_p(X, Y hᵀ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymDistEstimate {
    pub value: f64,
    /// Orthogonal `h` attaining `value`.
    pub rotation: Matrix,
    /// Always true: alternating minimization gives no optimality certificate.
    pub heuristic: bool,
    pub restarts: usize,
}

struct Duplicated {
    total: usize,
    kx: usize,
    ky: usize,
}

fn objective(x: &Matrix, y: &Matrix, h: &Matrix, dup: &Duplicated, p: f64) -> Result<(f64, Vec<usize>)> {
    let yr = y.matmul_t(h);
    let d = pairwise_distances(x, &yr);
    let cost = Matrix::from_fn(dup.total, dup.total, |i, j| d[(i / dup.kx, j / dup.ky)].powf(p));
    let perm = hungarian(&cost)?;
    let value = (assignment_cost(&cost, &perm) / dup.total as f64).max(0.0).powf(1.0 / p);
    Ok((value, perm))
}

/// Orthogonal Procrustes on matched rows: the two minimizers of
/// `Σ ‖x_a − h y_b‖²` restricted to each determinant sign.
fn procrustes(x: &Matrix, y: &Matrix, perm: &[usize], dup: &Duplicated) -> Result<[Matrix; 2]> {
    let k = x.cols();
    let mut m = Matrix::zeros(k, k);
    for (a, &b) in perm.iter().enumerate() {
        let (xa, yb) = (x.row(a / dup.kx), y.row(b / dup.ky));
        for r in 0..k {
            for c in 0..k {
                m[(r, c)] += xa[r] * yb[c];
            }
        }
    }
    let s = svd(&m)?;
    let h = s.left.matmul_t(&s.right);
    let mut flipped_left = s.left.clone();
    for r in 0..k {
        flipped_left[(r, k - 1)] = -flipped_left[(r, k - 1)];
    }
    let h_flip = flipped_left.matmul_t(&s.right);
    Ok([h, h_flip])
}

/// Symmetrized point-cloud distance `inf_{h ∈ O(k)} W_p(X, Y hᵀ)`, estimated by
/// alternating assignment and Procrustes steps from `restarts` starting
/// rotations (the first is the identity). Returns the best value found.
pub fn sym_dist_cloud(x: &Matrix, y: &Matrix, p: f64, restarts: usize, seed: u64) -> Result<SymDistEstimate> {
    check_clouds(x, y)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be finite and at least 1, got {p}")));
    }
    let k = x.cols();
    if !(2..=3).contains(&k) {
        return Err(invalid(format!("sym_dist_cloud supports k in {{2, 3}}, got {k}")));
    }
    let total = capped_lcm(x.rows(), y.rows(), LCM_CAP_ASSIGN, "assignment size")?;
    let dup = Duplicated {
        total,
        kx: total / x.rows(),
        ky: total / y.rows(),
    };
    let restarts = restarts.max(1);
    let results: Vec<Result<(f64, Matrix)>> = rng_streams(seed, restarts)
        .into_par_iter()
        .enumerate()
        .map(|(r, mut rng)| {
            let mut h = if r == 0 { Matrix::identity(k) } else { random_orthogonal(k, &mut rng) };
            let (mut best, mut perm) = objective(x, y, &h, &dup, p)?;
            for _ in 0..100 {
                let mut improved = None;
                for cand in procrustes(x, y, &perm, &dup)? {
                    let (v, pm) = objective(x, y, &cand, &dup, p)?;
                    if improved.as_ref().map_or(true, |(bv, _, _)| v < *bv) {
                        improved = Some((v, cand, pm));
                    }
                }
                let (v, cand, pm) = improved.expect("two candidates");
                if v < best - 1e-9 {
                    best = v;
                    h = cand;
                    perm = pm;
                } else {
                    if v < best {
                        best = v;
                        h = cand;
                    }
                    break;
                }
            }
            Ok((best, h))
        })
        .collect();
    let mut best: Option<(f64, Matrix)> = None;
    for r in results {
        let (v, h) = r?;
        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, h));
        }
    }
    let (value, rotation) = best.expect("at least one restart");
    Ok(SymDistEstimate {
        value,
        rotation,
        heuristic: true,
        restarts,
    })
}

/// Third lower bound on the Gromov–Wasserstein distance between the uniform
/// measures on the rows of `x` and `y`.
///
/// `Ω_ij` is the 1D `W_p` between the Euclidean distance profiles of `x_i`
/// in `X` and `y_j` in `Y`; the bound is `(min_π (1/N) Σ Ω^p)^{1/p}` over
/// assignments of the duplications to `N = lcm(n, m)`.
pub fn gw_tlb(x: &Matrix, y: &Matrix, p: f64) -> Result<f64> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(invalid("point clouds must be nonempty"));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(invalid("point cloud has non-finite coordinates"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be finite and at least 1, got {p}")));
    }
    for (what, n) in [("tlb cloud size", x.rows()), ("tlb cloud size", y.rows())] {
        if n > TLB_MAX_N {
            return Err(Error::SizeCapExceeded {
                what,
                value: n as u128,
                cap: TLB_MAX_N as u128,
            });
        }
    }
    let total = capped_lcm(x.rows(), y.rows(), LCM_CAP_ASSIGN, "assignment size")?;
    let dx = pairwise_distances(x, x);
    let dy = pairwise_distances(y, y);
    let (n, m) = (x.rows(), y.rows());
    let omega_rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| (0..m).map(|j| wasserstein_1d(dx.row(i), dy.row(j), p)).collect())
        .collect();
    let mut omega = Matrix::zeros(n, m);
    for (i, row) in omega_rows.into_iter().enumerate() {
        omega.row_mut(i).copy_from_slice(&row?);
    }
    let (kx, ky) = (total / n, total / m);
    let cost = Matrix::from_fn(total, total, |a, b| omega[(a / kx, b / ky)].powf(p));
    let perm = hungarian(&cost)?;
    Ok((assignment_cost(&cost, &perm) / total as f64).max(0.0).powf(1.0 / p))
}
