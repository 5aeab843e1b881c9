//! Any-dimensional architectures as differentiable programs over a flat
//! [`ParamStore`].
//!
//! Every family is traced onto a [`Tape`]; the same trace serves evaluation
//! and reverse-mode gradients. Invariant families (sets, point clouds)
//! return a [`SizedObject::Vector`]; graph families return the transformed
//! graph signal.

pub mod audit;
mod clouds;
mod graphs;
mod mlp;
mod params;
mod sets;
mod spec;
pub mod tape;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistent::{SequenceKind, SizedMap, SizedObject};
use crate::error::{invalid, Result};
use crate::tensor::{Matrix, RngStream};

pub use graphs::{ggnn_layer_bound, ggnn_layer_norm, ggnn_linear_map};
pub use mlp::{chain, mlp_backward, mlp_forward, mlp_param_len, Mlp};
pub use params::{ParamEntry, ParamStore};
pub use spec::{Activation, Aggregation, DsciVariant, Family, ModelSpec};
pub use tape::{Tape, Var, SVD_GAP_MIN};

/// Nodes of interest after tracing one input.
#[derive(Clone, Copy, Debug)]
pub struct Traced {
    /// Leaf holding the primary input matrix (set, cloud, signal or adjacency).
    pub input: Var,
    /// `1 x out` for invariant families, `n x out` node outputs for graphs.
    pub pred: Var,
    pub adj: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

/// Sums per-sample `(loss, gradient)` results in index order, skipping
/// `None` entries, and averages over the used ones.
pub fn reduce_grads(per: Vec<Result<Option<(f64, Vec<f64>)>>>, len: usize) -> Result<GradReport> {
    let mut grad = vec![0.0; len];
    let (mut loss, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for r in per {
        match r? {
            Some((l, g)) => {
                loss += l;
                used += 1;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            None => skipped += 1,
        }
    }
    if used > 0 {
        let inv = 1.0 / used as f64;
        loss *= inv;
        grad.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(GradReport {
        loss,
        grad,
        used,
        skipped,
    })
}

/// One training example: an input and the target for [`Traced::pred`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: SizedObject,
    pub target: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// Mean over used samples of the per-sample mean squared error.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub used: usize,
    /// Samples dropped because an SVD had nearly repeated singular values.
    pub skipped: usize,
}

impl Model {
    /// Builds the model with parameters drawn from `U[±√(1/fan_in)]`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut rng = RngStream::new(seed);
        match spec.family {
            Family::DeepSet | Family::NormDeepSet | Family::PointNet => sets::register(&spec, &mut params, &mut rng)?,
            Family::Dsci(_) | Family::SvdDs => clouds::register(&spec, &mut params, &mut rng)?,
            _ => graphs::register(&spec, &mut params, &mut rng)?,
        }
        Ok(Self { spec, params })
    }

    /// Attaches existing parameters after checking names and shapes.
    pub fn with_params(spec: ModelSpec, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(spec.clone(), 0)?;
        let want: Vec<_> = fresh.params.entries().iter().map(|e| (&e.name, e.rows, e.cols)).collect();
        let got: Vec<_> = params.entries().iter().map(|e| (&e.name, e.rows, e.cols)).collect();
        if want != got {
            return Err(invalid("parameter names or shapes do not match the model spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn natural_sequence(&self) -> SequenceKind {
        self.spec.family.natural_sequence()
    }

    pub fn trace(&self, tape: &mut Tape, input: &SizedObject) -> Result<Traced> {
        match self.spec.family {
            Family::DeepSet | Family::NormDeepSet | Family::PointNet => sets::trace(&self.spec, &self.params, tape, input),
            Family::Dsci(_) | Family::SvdDs => clouds::trace(&self.spec, &self.params, tape, input),
            _ => graphs::trace(&self.spec, &self.params, tape, input),
        }
    }

    pub fn forward(&self, input: &SizedObject) -> Result<SizedObject> {
        let mut tape = Tape::new();
        let t = self.trace(&mut tape, input)?;
        let pred = tape.value(t.pred);
        match t.adj {
            // 2-IGN outputs are general n x n matrices, so no symmetry check.
            Some(a) => Ok(SizedObject::GraphSignal {
                adj: tape.value(a).clone(),
                x: pred.clone(),
            }),
            None => Ok(SizedObject::Vector(pred.data().to_vec())),
        }
    }

    /// The prediction matrix alone (`1 x out` or `n x out`).
    pub fn predict(&self, input: &SizedObject) -> Result<Matrix> {
        let mut tape = Tape::new();
        let t = self.trace(&mut tape, input)?;
        Ok(tape.value(t.pred).clone())
    }

    /// Limit output `σ(∫ρ dμ)` of a normalized DeepSet, with `μ` the uniform
    /// measure on the rows of `points` (e.g. quantile or quadrature nodes).
    pub fn mean_field(&self, points: &Matrix) -> Result<Matrix> {
        sets::mean_field(&self.spec, &self.params, points)
    }

    /// Per-sample squared error and its parameter gradient, or `None` when
    /// the sample must be skipped.
    fn sample_grad(&self, ex: &Example) -> Result<Option<(f64, Vec<f64>)>> {
        let mut tape = Tape::new();
        let t = self.trace(&mut tape, &ex.input)?;
        let pred = tape.value(t.pred);
        if pred.shape() != ex.target.shape() {
            return Err(invalid(format!(
                "prediction has shape {:?}, target {:?}",
                pred.shape(),
                ex.target.shape()
            )));
        }
        let count = pred.data().len() as f64;
        let resid = pred.sub(&ex.target);
        let loss = resid.data().iter().map(|r| r * r).sum::<f64>() / count;
        tape.backward(t.pred, resid.scale(2.0 / count));
        if tape.degenerate_svd {
            return Ok(None);
        }
        let mut g = vec![0.0; self.params.len()];
        tape.scatter_param_grads(&mut g);
        Ok(Some((loss, g)))
    }

    /// Gradient of the batch-mean MSE. Samples are processed in parallel and
    /// summed in index order.
    pub fn grad(&self, batch: &[Example]) -> Result<GradReport> {
        self.grad_refs(&batch.iter().collect::<Vec<_>>())
    }

    /// [`Model::grad`] over borrowed examples.
    pub fn grad_refs(&self, batch: &[&Example]) -> Result<GradReport> {
        let per: Vec<Result<Option<(f64, Vec<f64>)>>> = batch.par_iter().map(|ex| self.sample_grad(ex)).collect();
        reduce_grads(per, self.params.len())
    }

    /// Batch-mean MSE without gradients.
    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        self.loss_refs(&batch.iter().collect::<Vec<_>>())
    }

    /// [`Model::loss`] over borrowed examples.
    pub fn loss_refs(&self, batch: &[&Example]) -> Result<f64> {
        let per: Vec<Result<f64>> = batch
            .par_iter()
            .map(|ex| {
                let p = self.predict(&ex.input)?;
                if p.shape() != ex.target.shape() {
                    return Err(invalid("prediction and target shapes differ"));
                }
                Ok(p.sub(&ex.target).data().iter().map(|r| r * r).sum::<f64>() / p.data().len() as f64)
            })
            .collect();
        let mut total = 0.0;
        for l in per {
            total += l?;
        }
        Ok(total / batch.len().max(1) as f64)
    }
}

impl SizedMap for Model {
    fn apply(&self, x: &SizedObject) -> Result<SizedObject> {
        self.forward(x)
    }
}
