use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistent::{default_norm, embed, norm, output_sequence, SequenceKind, SizedMap, SizedObject};
use crate::error::{invalid, Result};
use crate::harness::rate::{median, RateReport};
use crate::harness::sampler::{quadrature_nodes, sample, SamplerSpec};
use crate::metrics::wasserstein_1d;
use crate::models::Model;

/// What outputs are compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reference {
    /// Entrywise median of the outputs at the largest size.
    LargestSize,
    /// A known limit value for vector outputs.
    Value { value: Vec<f64> },
    /// `f(input)` embedded to each size; for inputs that induce the limit
    /// object exactly (e.g. a one-node graph for a constant graphon).
    Embedded { input: SizedObject, seq: SequenceKind },
}

/// One (size, trial) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPoint {
    pub size: usize,
    pub trial: usize,
    /// The scalar output, or the output norm for non-scalar outputs.
    pub value: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferRun {
    pub report: RateReport,
    pub points: Vec<TransferPoint>,
}

fn magnitude(y: &SizedObject, seq: SequenceKind) -> Result<f64> {
    match y {
        SizedObject::Vector(v) if v.len() == 1 => Ok(v[0]),
        _ => norm(y, default_norm(output_sequence(seq, y))),
    }
}

fn vec_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid("output and reference lengths differ"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn input_sequence(x: &SizedObject) -> SequenceKind {
    match x {
        SizedObject::Set(_) => SequenceKind::DupSet,
        SizedObject::GraphSignal { .. } => SequenceKind::DupGraph,
        SizedObject::PointCloud(_) => SequenceKind::DupPointCloud,
        SizedObject::Vector(_) => SequenceKind::Trivial,
    }
}

/// Evaluates `model` on `trials` samples at every size and measures each
/// output's distance to `reference`. Trials run in parallel; results are
/// ordered by (size, trial).
pub fn run_transfer(
    model: &dyn SizedMap,
    sampler: &SamplerSpec,
    sizes: &[usize],
    trials: usize,
    reference: &Reference,
) -> Result<TransferRun> {
    if sizes.is_empty() || trials == 0 {
        return Err(invalid("need at least one size and one trial"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sizes must be strictly increasing"));
    }
    sampler.validate()?;
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let outputs: Vec<Result<SizedObject>> = jobs
        .par_iter()
        .map(|&(n, t)| model.apply(&sample(sampler, n, t)?))
        .collect();
    let outputs: Vec<SizedObject> = outputs.into_iter().collect::<Result<_>>()?;

    let probe = sample(sampler, sizes[0], 0)?;
    let seq = input_sequence(&probe);
    let ref_vec: Option<Vec<f64>> = match reference {
        Reference::Value { value } => Some(value.clone()),
        Reference::LargestSize => {
            let last = &outputs[outputs.len() - trials..];
            let vs: Vec<&Vec<f64>> = last
                .iter()
                .map(|o| match o {
                    SizedObject::Vector(v) => Ok(v),
                    _ => Err(invalid("largest-size reference needs vector outputs")),
                })
                .collect::<Result<_>>()?;
            let dim = vs[0].len();
            Some((0..dim).map(|j| median(&vs.iter().map(|v| v[j]).collect::<Vec<_>>())).collect())
        }
        Reference::Embedded { .. } => None,
    };
    let base = match reference {
        Reference::Embedded { input, seq } => Some((model.apply(input)?, *seq)),
        _ => None,
    };

    let mut points = Vec::with_capacity(jobs.len());
    for (&(n, t), y) in jobs.iter().zip(&outputs) {
        let distance = match (&ref_vec, &base) {
            (Some(r), _) => match y {
                SizedObject::Vector(v) => vec_dist(v, r)?,
                _ => return Err(invalid("value reference needs vector outputs")),
            },
            (None, Some((fx, in_seq))) => {
                let out_seq = output_sequence(*in_seq, fx);
                let r = embed(fx, out_seq, n)?;
                norm(&y.sub(&r)?, default_norm(out_seq))?
            }
            (None, None) => unreachable!(),
        };
        points.push(TransferPoint {
            size: n,
            trial: t,
            value: magnitude(y, seq)?,
            distance,
        });
    }
    let dist: Vec<Vec<f64>> = points.chunks(trials).map(|c| c.iter().map(|p| p.distance).collect()).collect();
    let vals: Vec<Vec<f64>> = points.chunks(trials).map(|c| c.iter().map(|p| p.value).collect()).collect();
    let mut report = RateReport::from_samples(sizes, &dist, &vals);
    report.reference = ref_vec;
    Ok(TransferRun { report, points })
}

/// Limit output `σ(∫ρ dμ)` of a normalized DeepSet on a scalar or signal
/// limit, from `m` quadrature nodes, with `|f(m) - f(m/2)|` as error estimate.
pub fn mean_field_reference(model: &Model, sampler: &SamplerSpec, m: usize) -> Result<(Vec<f64>, f64)> {
    let full = model.mean_field(&quadrature_nodes(&sampler.limit, m)?)?;
    let half = model.mean_field(&quadrature_nodes(&sampler.limit, (m / 2).max(1))?)?;
    let err = vec_dist(full.data(), half.data())?;
    Ok((full.into_vec(), err))
}

/// `W_1(μ, μ_n)` for a scalar limit, with `μ` replaced by `reference_points`
/// quantile nodes. Sizes must keep `lcm(n, reference_points)` under the 1D
/// Wasserstein cap.
pub fn empirical_w1_rate(
    sampler: &SamplerSpec,
    sizes: &[usize],
    trials: usize,
    reference_points: usize,
) -> Result<RateReport> {
    let q = quadrature_nodes(&sampler.limit, reference_points)?;
    let mut dist = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let d: Vec<Result<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| match sample(sampler, n, t)? {
                SizedObject::Set(x) => wasserstein_1d(x.data(), q.data(), 1.0),
                _ => Err(invalid("empirical W1 rate needs a scalar limit")),
            })
            .collect();
        dist.push(d.into_iter().collect::<Result<Vec<f64>>>()?);
    }
    let vals = dist.clone();
    Ok(RateReport::from_samples(sizes, &dist, &vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sampler::{Limit, ScalarDist, Scheme};
    use crate::models::{Family, ModelSpec};
    use crate::tensor::Matrix;

    fn gauss(seed: u64) -> SamplerSpec {
        SamplerSpec::new(
            Limit::Scalar {
                dist: ScalarDist::Gaussian { mean: 0.0, std: 1.0 },
            },
            Scheme::IidEmpirical,
            seed,
        )
    }

    #[test]
    fn mean_field_is_the_model_on_the_node_set() {
        let model = Model::new(ModelSpec::new(Family::NormDeepSet, 1).hidden(6), 2).unwrap();
        let q = quadrature_nodes(&gauss(0).limit, 9000).unwrap();
        let direct = model.predict(&SizedObject::Set(q.clone())).unwrap();
        let chunked = model.mean_field(&q).unwrap();
        assert!((direct.data()[0] - chunked.data()[0]).abs() < 1e-12);
    }

    #[test]
    fn embedded_reference_is_exact_for_compatible_models() {
        let model = Model::new(ModelSpec::new(Family::NormDeepSet, 1).hidden(5), 1).unwrap();
        let sampler = SamplerSpec::new(
            Limit::Signal {
                f: crate::harness::sampler::SignalFn::Constant { value: 0.3 },
            },
            Scheme::UniformGrid,
            0,
        );
        let reference = Reference::Embedded {
            input: SizedObject::Set(Matrix::column(&[0.3])),
            seq: SequenceKind::DupSet,
        };
        let run = run_transfer(&model, &sampler, &[2, 4, 8, 16], 2, &reference).unwrap();
        assert!(run.report.constant);
        assert_eq!(run.points.len(), 8);
        assert!(run.report.fit.is_none());
    }

    #[test]
    fn transfer_is_deterministic() {
        let model = Model::new(ModelSpec::new(Family::NormDeepSet, 1).hidden(5), 3).unwrap();
        let a = run_transfer(&model, &gauss(4), &[8, 16, 32, 64], 5, &Reference::LargestSize).unwrap();
        let b = run_transfer(&model, &gauss(4), &[8, 16, 32, 64], 5, &Reference::LargestSize).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn unsorted_sizes_are_rejected() {
        let model = Model::new(ModelSpec::new(Family::NormDeepSet, 1).hidden(5), 3).unwrap();
        assert!(run_transfer(&model, &gauss(0), &[16, 8], 1, &Reference::LargestSize).is_err());
    }
}
