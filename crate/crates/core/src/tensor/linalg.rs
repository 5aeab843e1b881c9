use crate::error::{invalid, Result};
use crate::tensor::matrix::{dot, norm2, Matrix};
use crate::tensor::rng::RngStream;

const SYM_TOL: f64 = 1e-12;

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Lanczos with full reorthogonalization from a seeded random start; the
/// extreme Ritz values come from Sturm-sequence bisection on the tridiagonal
/// matrix. Iteration stops once the estimate has been stable to 1e-14
/// relative for three steps, on breakdown, or after `n` steps (exact).
pub fn op_norm_2(a: &Matrix) -> Result<f64> {
    if !a.is_square() || !a.is_symmetric(SYM_TOL) {
        return Err(invalid("op_norm_2 needs a symmetric matrix"));
    }
    if !a.is_finite() {
        return Err(invalid("op_norm_2 input has non-finite entries"));
    }
    let n = a.rows();
    let scale = a.max_abs();
    if n == 0 || scale == 0.0 {
        return Ok(0.0);
    }
    let a = a.scale(1.0 / scale);
    let mut rng = RngStream::new(0x6F70_6E6F_726D);
    let mut q = rng.gaussians(n);
    let nq = norm2(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let (mut est, mut stable) = (0.0_f64, 0);
    for _ in 0..n {
        let mut w = apply(&a, &q);
        let al = dot(&q, &w);
        alpha.push(al);
        basis.push(q);
        // Two Gram-Schmidt passes against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let next = tridiag_abs_max(&alpha, &beta);
        if (next - est).abs() <= 1e-14 * next {
            stable += 1;
        } else {
            stable = 0;
        }
        est = next;
        let bt = norm2(&w);
        if stable >= 3 || bt <= 1e-12 {
            break;
        }
        beta.push(bt);
        q = w.into_iter().map(|v| v / bt).collect();
    }
    Ok(est * scale)
}

fn apply(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), x)).collect()
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0_f64;
    for (i, a) in alpha.iter().enumerate() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = a - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiag_abs_max(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let radius = |i: usize| {
        (if i > 0 { beta[i - 1].abs() } else { 0.0 }) + (if i + 1 < k { beta[i].abs() } else { 0.0 })
    };
    let lo0 = (0..k).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let hi0 = (0..k).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    // Eigenvalue of rank `target` (0 = smallest) by bisection.
    let bisect = |target: usize| {
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(alpha, beta, mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    bisect(0).abs().max(bisect(k - 1).abs())
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() || !a.is_symmetric(1e-10 * (1.0 + a.max_abs())) {
        return Err(invalid("cholesky needs a symmetric matrix"));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(invalid("cholesky: matrix is not positive definite"));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `log det A` for symmetric positive-definite `A`.
pub fn log_det_spd(a: &Matrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Principal submatrix on `idx`.
pub fn submatrix(a: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cyclic Jacobi eigenvalue oracle for symmetric matrices.
    fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let mut m = a.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                }
            }
        }
        m.diagonal()
    }

    fn random_sym(n: usize, seed: u64) -> Matrix {
        let mut r = RngStream::new(seed);
        let g = Matrix::from_vec(n, n, r.gaussians(n * n)).unwrap();
        g.add(&g.transpose()).scale(0.5)
    }

    #[test]
    fn simple_cases() {
        assert!((op_norm_2(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-12);
        for n in [1, 3, 10] {
            let v = op_norm_2(&Matrix::ones(n, n)).unwrap();
            assert!((v - n as f64).abs() < 1e-10 * n as f64);
        }
        assert_eq!(op_norm_2(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        let neg = Matrix::diag(&[-3.0, 1.0]);
        assert!((op_norm_2(&neg).unwrap() - 3.0).abs() < 1e-12);
        let pm = Matrix::diag(&[2.0, -2.0, 1.0]);
        assert!((op_norm_2(&pm).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_jacobi_oracle() {
        for seed in [3, 4, 5, 6] {
            let a = random_sym(6, seed);
            let want = jacobi_eigenvalues(&a).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let got = op_norm_2(&a).unwrap();
            assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn clustered_spectrum_with_known_eigenvalues() {
        let n = 120;
        let mut rng = RngStream::new(17);
        let q = crate::consistent::random_orthogonal(n, &mut rng);
        let mut lam: Vec<f64> = (0..n).map(|i| -2.9 + 5.8 * i as f64 / (n - 1) as f64).collect();
        lam[0] = -3.0;
        lam[n - 1] = 2.9999;
        let a = q.matmul(&Matrix::diag(&lam)).matmul_t(&q);
        let a = Matrix::from_fn(n, n, |i, j| 0.5 * (a.data()[i * n + j] + a.data()[j * n + i]));
        assert!((op_norm_2(&a).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn homogeneous() {
        let a = random_sym(5, 9);
        let base = op_norm_2(&a).unwrap();
        for c in [-2.5, 0.3, 7.0] {
            let v = op_norm_2(&a.scale(c)).unwrap();
            assert!((v - c.abs() * base).abs() <= 1e-10 * base * c.abs());
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(op_norm_2(&a).is_err());
    }

    #[test]
    fn cholesky_roundtrip_and_logdet() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!(l.matmul_t(&l).sub(&a).max_abs() < 1e-14);
        assert!((log_det_spd(&a).unwrap() - 8f64.ln()).abs() < 1e-14);
        assert!(cholesky(&Matrix::diag(&[1.0, -1.0])).is_err());
    }
}
