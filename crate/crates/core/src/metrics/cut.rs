use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{op_norm_2, Matrix};

/// Largest graph size for exact cut-norm enumeration.
pub const CUT_EXACT_MAX_N: usize = 14;

/// Bracket on the cut norm from the graph operator 2-norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutBounds {
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
}

fn check_graph(a: &Matrix, x: &Matrix) -> Result<()> {
    if !a.is_square() || !a.is_symmetric(1e-12) {
        return Err(invalid("cut norm needs a symmetric adjacency"));
    }
    if x.rows() != a.rows() {
        return Err(invalid("signal rows do not match graph size"));
    }
    Ok(())
}

/// `max((1/n²) max_{S,T} |Σ_{S×T} A|, (1/n) max_S ‖Σ_S X_i‖)`.
///
/// Enumerates every `S` in Gray-code order, keeping the column sums of
/// `A[S, :]`; for fixed `S` the best `T` takes either all positive or all
/// negative column sums, so the inner maximum is exact.
pub fn cut_norm_exact(a: &Matrix, x: &Matrix) -> Result<f64> {
    check_graph(a, x)?;
    let n = a.rows();
    if n > CUT_EXACT_MAX_N {
        return Err(Error::SizeCapExceeded {
            what: "cut norm graph size",
            value: n as u128,
            cap: CUT_EXACT_MAX_N as u128,
        });
    }
    let d = x.cols();
    let mut colsum = vec![0.0; n];
    let mut signal = vec![0.0; d];
    let mut in_s = vec![false; n];
    let (mut best_a, mut best_x) = (0.0_f64, 0.0_f64);
    for step in 1..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let sign = if in_s[i] { -1.0 } else { 1.0 };
        in_s[i] = !in_s[i];
        for (c, v) in colsum.iter_mut().zip(a.row(i)) {
            *c += sign * v;
        }
        for (s, v) in signal.iter_mut().zip(x.row(i)) {
            *s += sign * v;
        }
        let (pos, neg) = colsum.iter().fold((0.0, 0.0), |(p, q), &c| {
            if c > 0.0 {
                (p + c, q)
            } else {
                (p, q - c)
            }
        });
        best_a = best_a.max(pos).max(neg);
        best_x = best_x.max(signal.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let nf = n as f64;
    Ok((best_a / (nf * nf)).max(best_x / nf))
}

/// Graph operator 2-norm `max(‖A‖_op/n, ‖X‖_2/√n)`.
pub fn graph_op2(a: &Matrix, x: &Matrix) -> Result<f64> {
    check_graph(a, x)?;
    let n = a.rows() as f64;
    let xs = if x.cols() == 0 {
        0.0
    } else {
        (x.row_norms().iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    };
    Ok((op_norm_2(a)? / n).max(xs))
}

/// `lower = op²/8 ≤ cut ≤ op = upper`; the lower bound assumes entries of
/// `A` and a scalar signal `X` in `[-1, 1]`. `exact` is filled for
/// `n ≤ 14`.
pub fn cut_bounds(a: &Matrix, x: &Matrix) -> Result<CutBounds> {
    let op = graph_op2(a, x)?;
    let exact = if a.rows() <= CUT_EXACT_MAX_N {
        Some(cut_norm_exact(a, x)?)
    } else {
        None
    };
    Ok(CutBounds {
        lower: op * op / 8.0,
        upper: op,
        exact,
    })
}
