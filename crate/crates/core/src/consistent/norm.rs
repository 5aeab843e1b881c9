use serde::{Deserialize, Serialize};

use crate::consistent::object::{SequenceKind, SizedObject};
use crate::error::{Error, Result};
use crate::metrics::cut_norm_exact;
use crate::tensor::{op_norm_2, Matrix};

/// Norms on the spaces of a consistent sequence. `p` may be `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "kebab-case")]
pub enum NormKind {
    Lp(f64),
    NormalizedLp(f64),
    GraphP(f64),
    GraphOpP(f64),
    Cut,
}

impl NormKind {
    /// Whether this norm is compatible with (isometric under) the embeddings of `seq`.
    pub fn compatible_with(self, seq: SequenceKind) -> bool {
        matches!(
            (self, seq),
            (Self::Lp(_), SequenceKind::ZeroPadSet | SequenceKind::Trivial)
                | (Self::NormalizedLp(_), SequenceKind::DupSet | SequenceKind::DupPointCloud)
                | (Self::GraphP(_) | Self::GraphOpP(_) | Self::Cut, SequenceKind::DupGraph)
        )
    }

    fn p(self) -> Option<f64> {
        match self {
            Self::Lp(p) | Self::NormalizedLp(p) | Self::GraphP(p) | Self::GraphOpP(p) => Some(p),
            Self::Cut => None,
        }
    }
}

/// The norm used to measure deviations in `seq`.
pub fn default_norm(seq: SequenceKind) -> NormKind {
    match seq {
        SequenceKind::ZeroPadSet | SequenceKind::Trivial => NormKind::Lp(2.0),
        SequenceKind::DupSet | SequenceKind::DupPointCloud => NormKind::NormalizedLp(2.0),
        SequenceKind::DupGraph => NormKind::GraphOpP(2.0),
    }
}

fn power_mean(values: impl Iterator<Item = f64>, p: f64, count: f64, normalized: bool) -> f64 {
    if p.is_infinite() {
        return values.fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = values.map(|v| v.abs().powf(p)).sum();
    let s = if normalized { s / count } else { s };
    s.powf(1.0 / p)
}

/// `(Σ ‖X_i‖^p)^{1/p}` over Euclidean row norms, divided by `n` inside the root if `normalized`.
fn rows_lp(x: &Matrix, p: f64, normalized: bool) -> f64 {
    if x.cols() == 0 {
        return 0.0;
    }
    power_mean(x.row_norms().into_iter(), p, x.rows() as f64, normalized)
}

/// Operator p-norm; adjacencies produced by 2-IGN layers need not be symmetric.
fn op_norm(a: &Matrix, p: f64) -> Result<f64> {
    if p == 2.0 {
        if a.is_symmetric(0.0) {
            return op_norm_2(a);
        }
        return Ok(op_norm_2(&a.t_matmul(a))?.sqrt());
    }
    let max_row = |m: &Matrix| {
        (0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    if p.is_infinite() {
        return Ok(max_row(a));
    }
    if p == 1.0 {
        return Ok(max_row(&a.transpose()));
    }
    Err(Error::Norm(format!("operator p-norm only implemented for p in {{1, 2, inf}}, got {p}")))
}

/// Norm of `x`. Which kinds apply depends on the object:
/// sets take `Lp`/`NormalizedLp`, point clouds `NormalizedLp`, graph signals
/// `GraphP`/`GraphOpP`/`Cut`, vectors `Lp`.
pub fn norm(x: &SizedObject, k: NormKind) -> Result<f64> {
    if let Some(p) = k.p() {
        if !(p >= 1.0) {
            return Err(Error::Norm(format!("p must lie in [1, inf], got {p}")));
        }
    }
    match (x, k) {
        (SizedObject::Set(m), NormKind::Lp(p)) => Ok(rows_lp(m, p, false)),
        (SizedObject::Set(m) | SizedObject::PointCloud(m), NormKind::NormalizedLp(p)) => Ok(rows_lp(m, p, true)),
        (SizedObject::Vector(v), NormKind::Lp(p)) => Ok(power_mean(v.iter().copied(), p, v.len() as f64, false)),
        (SizedObject::GraphSignal { adj, x }, NormKind::GraphP(p)) => {
            let n = adj.rows() as f64;
            let a = power_mean(adj.data().iter().copied(), p, n * n, true);
            Ok(a.max(rows_lp(x, p, true)))
        }
        (SizedObject::GraphSignal { adj, x }, NormKind::GraphOpP(p)) => {
            let a = op_norm(adj, p)? / adj.rows() as f64;
            Ok(a.max(rows_lp(x, p, true)))
        }
        (SizedObject::GraphSignal { adj, x }, NormKind::Cut) => cut_norm_exact(adj, x),
        _ => Err(Error::Norm(format!("{k:?} is not defined on a {}", x.kind_name()))),
    }
}
