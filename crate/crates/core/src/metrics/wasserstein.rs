use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{assignment_cost, hungarian, Matrix};

/// Largest common size allowed when comparing 1D samples by duplication.
pub const LCM_CAP_1D: u128 = 1_000_000;
/// Largest common size allowed for assignment-based comparisons.
pub const LCM_CAP_ASSIGN: u128 = 2000;

/// Uniform measure `(1/n) Σ δ_{x_i}` on the rows of `support`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub support: Matrix,
}

impl EmpiricalMeasure {
    pub fn new(support: Matrix) -> Result<Self> {
        if support.rows() == 0 {
            return Err(invalid("empirical measure needs at least one atom"));
        }
        if !support.is_finite() {
            return Err(invalid("empirical measure has non-finite atoms"));
        }
        Ok(Self { support })
    }

    pub fn n(&self) -> usize {
        self.support.rows()
    }
}

pub(crate) fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn capped_lcm(n: usize, m: usize, cap: u128, what: &'static str) -> Result<usize> {
    let (a, b) = (n as u128, m as u128);
    let l = a / gcd(a, b) * b;
    if l > cap {
        return Err(Error::SizeCapExceeded { what, value: l, cap });
    }
    Ok(l as usize)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("p must lie in [1, inf], got {p}")))
    }
}

fn sorted(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(invalid("empty sample"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sample has non-finite values"));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `W_p` between the uniform measures on `x` and `y`.
///
/// Equal to the normalized `ℓ_p` distance between the sorted duplications of
/// both samples to size `lcm(n, m)`. The sum is evaluated by walking the
/// merged quantile breakpoints, so memory stays `O(n + m)`, but the lcm cap
/// still applies.
pub fn wasserstein_1d(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    let xs = sorted(x)?;
    let ys = sorted(y)?;
    let (n, m) = (xs.len(), ys.len());
    let total = capped_lcm(n, m, LCM_CAP_1D, "lcm of sample sizes")?;
    // Work in units of 1/total: x atom i covers total/n units, y atom j total/m.
    let (sx, sy) = (total / n, total / m);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut left_x, mut left_y) = (sx, sy);
    let mut acc = 0.0_f64;
    while i < n && j < m {
        let step = left_x.min(left_y);
        let d = (xs[i] - ys[j]).abs();
        if p.is_infinite() {
            acc = acc.max(d);
        } else {
            acc += step as f64 * d.powf(p);
        }
        left_x -= step;
        left_y -= step;
        if left_x == 0 {
            i += 1;
            left_x = sx;
        }
        if left_y == 0 {
            j += 1;
            left_y = sy;
        }
    }
    if p.is_infinite() {
        Ok(acc)
    } else {
        Ok((acc / total as f64).powf(1.0 / p))
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Pairwise Euclidean distances between the rows of `x` and `y`.
pub fn pairwise_distances(x: &Matrix, y: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), y.rows(), |i, j| euclid(x.row(i), y.row(j)))
}

/// `W_p` between two empirical measures by optimal assignment of their
/// duplications to the common size `lcm(n, m)` under cost `‖x − y‖^p`.
pub fn wasserstein_assign(x: &EmpiricalMeasure, y: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_p(p)?;
    if p.is_infinite() {
        return Err(invalid("wasserstein_assign needs a finite p"));
    }
    if x.support.cols() != y.support.cols() {
        return Err(invalid("measures live in different dimensions"));
    }
    let (n, m) = (x.n(), y.n());
    let total = capped_lcm(n, m, LCM_CAP_ASSIGN, "assignment size")?;
    let d = pairwise_distances(&x.support, &y.support);
    let (kx, ky) = (total / n, total / m);
    let cost = Matrix::from_fn(total, total, |i, j| d[(i / kx, j / ky)].powf(p));
    let perm = hungarian(&cost)?;
    Ok((assignment_cost(&cost, &perm) / total as f64).max(0.0).powf(1.0 / p))
}
