use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistent::norm::{default_norm, norm};
use crate::consistent::object::{act, embed, GroupElement, SequenceKind, SizedObject};
use crate::error::Result;
use crate::tensor::{rng_streams, Matrix};

/// Relative tolerance for PASS: deviation ≤ `COMPAT_TOL · (1 + ‖f(x)‖)`.
pub const COMPAT_TOL: f64 = 1e-7;

/// A map defined on every size of a consistent sequence.
pub trait SizedMap: Sync {
    fn apply(&self, x: &SizedObject) -> Result<SizedObject>;
}

impl<F> SizedMap for F
where
    F: Fn(&SizedObject) -> Result<SizedObject> + Sync,
{
    fn apply(&self, x: &SizedObject) -> Result<SizedObject> {
        self(x)
    }
}

/// Sequence the output of a model lives in, given the input sequence.
pub fn output_sequence(input: SequenceKind, out: &SizedObject) -> SequenceKind {
    match out {
        SizedObject::Vector(_) => SequenceKind::Trivial,
        SizedObject::Set(_) if input == SequenceKind::ZeroPadSet => SequenceKind::ZeroPadSet,
        SizedObject::Set(_) => SequenceKind::DupSet,
        SizedObject::GraphSignal { .. } => SequenceKind::DupGraph,
        SizedObject::PointCloud(_) => SequenceKind::DupPointCloud,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub trial: usize,
    pub n: usize,
    pub big: usize,
    pub deviation: f64,
    /// `‖f(x)‖` in the output norm; the PASS threshold scales with `1 + reference`.
    pub reference: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub entries: Vec<Deviation>,
    pub max_deviation: f64,
    pub max_relative: f64,
    pub pass: bool,
}

impl CheckReport {
    fn from_entries(entries: Vec<Deviation>) -> Self {
        let max_deviation = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
        let max_relative = entries
            .iter()
            .map(|e| e.deviation / (1.0 + e.reference))
            .fold(0.0, f64::max);
        let pass = entries.iter().all(|e| e.pass);
        Self {
            entries,
            max_deviation,
            max_relative,
            pass,
        }
    }
}

fn judge(deviation: f64, reference: f64) -> bool {
    deviation.is_finite() && deviation <= COMPAT_TOL * (1.0 + reference)
}

/// Measures `‖f(embed(x, m·n)) − embed(f(x), m·n)‖` for every input and multiple.
///
/// Deviations use the default compatible norm of the output sequence.
pub fn check_compatibility(
    model: &dyn SizedMap,
    inputs: &[SizedObject],
    seq: SequenceKind,
    multiples: &[usize],
) -> Result<CheckReport> {
    let per_trial: Vec<Result<Vec<Deviation>>> = inputs
        .par_iter()
        .enumerate()
        .map(|(trial, x)| {
            let fx = model.apply(x)?;
            let out_seq = output_sequence(seq, &fx);
            let out_norm = default_norm(out_seq);
            let reference = norm(&fx, out_norm)?;
            multiples
                .iter()
                .map(|&m| {
                    let big = x.n() * m;
                    let lhs = model.apply(&embed(x, seq, big)?)?;
                    let rhs = embed(&fx, out_seq, big)?;
                    let deviation = norm(&lhs.sub(&rhs)?, out_norm)?;
                    Ok(Deviation {
                        trial,
                        n: x.n(),
                        big,
                        deviation,
                        reference,
                        pass: judge(deviation, reference),
                    })
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for t in per_trial {
        entries.extend(t?);
    }
    Ok(CheckReport::from_entries(entries))
}

/// Measures `‖f(g·x) − g·f(x)‖` over `trials` random group elements per input.
///
/// Point clouds also draw a random orthogonal factor; invariant outputs are
/// compared directly.
pub fn check_equivariance(
    model: &dyn SizedMap,
    inputs: &[SizedObject],
    seq: SequenceKind,
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let streams = rng_streams(seed, inputs.len());
    let per_input: Vec<Result<Vec<Deviation>>> = inputs
        .par_iter()
        .zip(streams)
        .enumerate()
        .map(|(idx, (x, mut rng))| {
            let fx = model.apply(x)?;
            let out_norm = default_norm(output_sequence(seq, &fx));
            let reference = norm(&fx, out_norm)?;
            let k = match x {
                SizedObject::PointCloud(m) => Some(m.cols()),
                _ => None,
            };
            (0..trials)
                .map(|t| {
                    let g = GroupElement::random(x.n(), k, &mut rng);
                    let lhs = model.apply(&act(&g, x)?)?;
                    let rhs = act(&g, &fx)?;
                    let deviation = norm(&lhs.sub(&rhs)?, out_norm)?;
                    Ok(Deviation {
                        trial: idx * trials + t,
                        n: x.n(),
                        big: x.n(),
                        deviation,
                        reference,
                        pass: judge(deviation, reference),
                    })
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for t in per_input {
        entries.extend(t?);
    }
    Ok(CheckReport::from_entries(entries))
}

/// Set input from rows.
pub fn set_of(rows: &[Vec<f64>]) -> Result<SizedObject> {
    SizedObject::set(Matrix::from_rows(rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn mean_model(x: &SizedObject) -> Result<SizedObject> {
        let m = x.features();
        Ok(SizedObject::scalar(m.sum() / m.rows() as f64))
    }

    fn sum_model(x: &SizedObject) -> Result<SizedObject> {
        Ok(SizedObject::scalar(x.features().sum()))
    }

    #[test]
    fn mean_is_compatible_sum_is_not() {
        let x = set_of(&[vec![1.0], vec![-3.0], vec![0.5]]).unwrap();
        let r = check_compatibility(&mean_model, &[x.clone()], SequenceKind::DupSet, &[2, 3]).unwrap();
        assert!(r.pass);
        assert!(r.max_deviation < 1e-15);
        let r = check_compatibility(&sum_model, &[x.clone()], SequenceKind::DupSet, &[2]).unwrap();
        assert!(!r.pass);
        assert!((r.max_deviation - 1.5).abs() < 1e-12);
        let r = check_compatibility(&sum_model, &[x], SequenceKind::ZeroPadSet, &[2, 4]).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn equivariance_of_invariant_model() {
        let x = set_of(&[vec![1.0], vec![2.0], vec![7.0]]).unwrap();
        let r = check_equivariance(&sum_model, &[x], SequenceKind::DupSet, 5, 1).unwrap();
        assert!(r.pass);
        assert_eq!(r.entries.len(), 5);
    }

    #[test]
    fn errors_propagate() {
        let failing = |_: &SizedObject| -> Result<SizedObject> { Err(Error::InvalidInput("boom".into())) };
        let x = set_of(&[vec![1.0]]).unwrap();
        assert!(check_compatibility(&failing, &[x], SequenceKind::DupSet, &[2]).is_err());
    }
}
