use crate::error::{invalid, Result};
use crate::tensor::matrix::{dot, Matrix};

const OFF_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Thin SVD `X = U diag(σ) Vᵀ` with canonical signs.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `n x k`, orthonormal columns.
    pub left: Matrix,
    /// Descending, nonnegative.
    pub singular: Vec<f64>,
    /// `k x k`, orthogonal; column `i` is the `i`-th right singular vector.
    pub right: Matrix,
}

impl SvdResult {
    /// Smallest gap between consecutive singular values.
    pub fn gap1(&self) -> f64 {
        min_gap(&self.singular, 1)
    }

    /// Smallest gap between consecutive squared singular values.
    pub fn gap2(&self) -> f64 {
        min_gap(&self.singular, 2)
    }

    /// Singular values of the step-function view of an `n`-row input: `σ / √n`.
    pub fn functional_singular(&self) -> Vec<f64> {
        let s = (self.left.rows() as f64).sqrt();
        self.singular.iter().map(|v| v / s).collect()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left.clone();
        for i in 0..us.rows() {
            for (j, v) in us.row_mut(i).iter_mut().enumerate() {
                *v *= self.singular[j];
            }
        }
        us.matmul_t(&self.right)
    }

    /// Radius in the normalized Frobenius norm `‖·‖_F/√n` within which the
    /// sign pattern of the right singular vectors cannot change. Zero when
    /// singular values repeat or a right-singular entry vanishes.
    pub fn sign_stability_radius(&self) -> f64 {
        let k = self.singular.len();
        let fs = self.functional_singular();
        let gap1 = min_gap(&fs, 1);
        let gap2 = min_gap(&fs, 2);
        if k > 1 && (gap1 <= 0.0 || gap2 <= 0.0) {
            return 0.0;
        }
        let min_entry = self
            .right
            .data()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if k == 1 {
            return 1.0_f64.min(min_entry);
        }
        let b = 8f64.sqrt() * (2.0 * fs[0] + 1.0) / gap2;
        1.0_f64
            .min(gap1 / (2.0 * (k as f64).sqrt()))
            .min(min_entry / (2.0 * b))
    }
}

fn min_gap(s: &[f64], power: i32) -> f64 {
    s.windows(2)
        .map(|w| w[0].powi(power) - w[1].powi(power))
        .fold(f64::INFINITY, f64::min)
}

/// One-sided (Hestenes) Jacobi SVD of an `n x k` matrix with `k <= n`.
///
/// Columns are rotated pairwise until every pair is orthogonal to within
/// `1e-12` relative; the accumulated rotations form `V`. Each right singular
/// vector is then sign-flipped so that its first nonzero entry is positive.
pub fn svd(x: &Matrix) -> Result<SvdResult> {
    let (n, k) = x.shape();
    if k > n {
        return Err(invalid(format!("svd needs k <= n, got {n}x{k}")));
    }
    if !x.is_finite() {
        return Err(invalid("svd input has non-finite entries"));
    }
    // Work column-major: cols[j] is column j of the working matrix.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| x.col(j)).collect();
    let mut v = Matrix::identity(k);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= OFF_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (ap, aq) = (*a, *b);
                    *a = c * ap - s * aq;
                    *b = s * ap + c * aq;
                }
                for i in 0..k {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps the original column order on exact ties.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let scale = norms.first().map_or(0.0, |_| norms.iter().cloned().fold(0.0, f64::max));
    let mut singular = Vec::with_capacity(k);
    let mut right = Matrix::zeros(k, k);
    let mut left_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        let mut sign = 1.0;
        let vcol = v.col(src);
        if let Some(first) = vcol.iter().find(|e| **e != 0.0) {
            if *first < 0.0 {
                sign = -1.0;
            }
        }
        for i in 0..k {
            right[(i, dst)] = sign * vcol[i];
        }
        singular.push(sigma);
        if sigma > 0.0 && sigma > 1e-300 && sigma >= scale * 1e-15 {
            left_cols.push(Some(cols[src].iter().map(|e| sign * e / sigma).collect()));
        } else {
            left_cols.push(None);
        }
    }

    let left = complete_orthonormal(n, left_cols);
    Ok(SvdResult {
        left,
        singular,
        right,
    })
}

/// Fill missing columns with unit vectors orthogonal to the present ones.
fn complete_orthonormal(n: usize, cols: Vec<Option<Vec<f64>>>) -> Matrix {
    let k = cols.len();
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut filled: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut candidate = 0usize;
    for c in cols {
        match c {
            Some(c) => filled.push(c),
            None => loop {
                let mut e = vec![0.0; n];
                e[candidate % n] = 1.0;
                candidate += 1;
                for b in &basis {
                    let d = dot(&e, b);
                    for (x, y) in e.iter_mut().zip(b) {
                        *x -= d * y;
                    }
                }
                let nrm = dot(&e, &e).sqrt();
                if nrm > 1e-8 {
                    e.iter_mut().for_each(|x| *x /= nrm);
                    basis.push(e.clone());
                    filled.push(e);
                    break;
                }
            },
        }
    }
    Matrix::from_fn(n, k, |i, j| filled[j][i])
}

/// Backward of `Y = X V(X)` where `V` holds the canonical right singular
/// vectors. Given `dL/dY`, returns `dL/dX`, or `None` if two squared
/// singular values are closer than `min_gap` (the linearization is invalid).
///
/// With `G = XᵀX = V Λ Vᵀ`, `dV = V (F ∘ (Vᵀ dG V))` where
/// `F_ij = 1/(λ_j − λ_i)` off the diagonal; the adjoint is
/// `dL/dX = Ȳ Vᵀ + X (M + Mᵀ)`, `M = V (F ∘ (Vᵀ V̄)) Vᵀ`, `V̄ = Xᵀ Ȳ`.
pub fn svd_project_backward(x: &Matrix, svd: &SvdResult, grad_y: &Matrix, min_gap: f64) -> Option<Matrix> {
    let v = &svd.right;
    let k = v.cols();
    let lambda: Vec<f64> = svd.singular.iter().map(|s| s * s).collect();
    for i in 0..k {
        for j in (i + 1)..k {
            if (lambda[i] - lambda[j]).abs() < min_gap {
                return None;
            }
        }
    }
    let v_bar = x.t_matmul(grad_y);
    let vt_vbar = v.t_matmul(&v_bar);
    let mut inner = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                inner[(i, j)] = vt_vbar[(i, j)] / (lambda[j] - lambda[i]);
            }
        }
    }
    let m = v.matmul(&inner).matmul_t(v);
    let sym = m.add(&m.transpose());
    let mut grad_x = grad_y.matmul_t(v);
    grad_x.add_assign(&x.matmul(&sym));
    Some(grad_x)
}
