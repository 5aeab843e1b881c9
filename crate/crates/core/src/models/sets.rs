//! DeepSet, normalized DeepSet and PointNet: `σ(Agg_i ρ(X_i))` with sum,
//! mean and entrywise-max aggregation.

use crate::consistent::SizedObject;
use crate::error::{invalid, Result};
use crate::models::mlp::{chain, Mlp};
use crate::models::params::ParamStore;
use crate::models::spec::{Family, ModelSpec};
use crate::models::tape::{Tape, Var};
use crate::models::Traced;
use crate::tensor::{Matrix, RngStream};

fn parts(spec: &ModelSpec) -> Result<(Mlp, Mlp)> {
    let rho = Mlp::describe("rho", chain(spec.in_dim, spec.hidden, spec.hidden, spec.mlp_layers), spec.rho_bias)?;
    let sigma = Mlp::describe("sigma", chain(spec.hidden, spec.hidden, spec.out_dim, spec.mlp_layers), true)?;
    Ok((rho, sigma))
}

pub(crate) fn register(spec: &ModelSpec, store: &mut ParamStore, rng: &mut RngStream) -> Result<()> {
    let (rho, sigma) = parts(spec)?;
    rho.init(store, rng)?;
    sigma.init(store, rng)?;
    Ok(())
}

/// Row-wise encoder, aggregation over rows, then the readout MLP.
pub(crate) fn aggregate_readout(
    spec: &ModelSpec,
    store: &ParamStore,
    tape: &mut Tape,
    x: Var,
    family: Family,
) -> Result<Var> {
    let (rho, sigma) = parts(spec)?;
    let h = rho.forward(tape, store, x, spec.activation)?;
    let pooled = match family {
        Family::DeepSet => tape.sum_rows(h),
        Family::PointNet => tape.max_rows(h),
        _ => tape.mean_rows(h),
    };
    sigma.forward(tape, store, pooled, spec.activation)
}

pub(crate) fn trace(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, input: &SizedObject) -> Result<Traced> {
    let SizedObject::Set(x) = input else {
        return Err(invalid(format!("set model got a {}", input.kind_name())));
    };
    if x.cols() != spec.in_dim || x.rows() == 0 {
        return Err(invalid(format!("expected a nonempty n x {} set, got {:?}", spec.in_dim, x.shape())));
    }
    let xv = tape.leaf(x.clone());
    let pred = aggregate_readout(spec, store, tape, xv, spec.family)?;
    Ok(Traced {
        input: xv,
        pred,
        adj: None,
    })
}

/// `σ(mean_i ρ(P_i))` for a normalized DeepSet, with the mean over `points`
/// accumulated in chunks so very large quadrature sets fit in memory.
pub(crate) fn mean_field(spec: &ModelSpec, store: &ParamStore, points: &Matrix) -> Result<Matrix> {
    if spec.family != Family::NormDeepSet {
        return Err(invalid("mean-field evaluation is only defined for the normalized DeepSet"));
    }
    if points.cols() != spec.in_dim || points.rows() == 0 {
        return Err(invalid(format!("expected a nonempty n x {} point set", spec.in_dim)));
    }
    const CHUNK: usize = 4096;
    let (rho, sigma) = parts(spec)?;
    let mut acc = Matrix::zeros(1, spec.hidden);
    let mut start = 0;
    while start < points.rows() {
        let end = (start + CHUNK).min(points.rows());
        let idx: Vec<usize> = (start..end).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(points.select_rows(&idx));
        let h = rho.forward(&mut tape, store, x, spec.activation)?;
        let s = tape.sum_rows(h);
        acc.add_assign(tape.value(s));
        start = end;
    }
    let mut tape = Tape::new();
    let pooled = tape.leaf(acc.scale(1.0 / points.rows() as f64));
    let out = sigma.forward(&mut tape, store, pooled, spec.activation)?;
    Ok(tape.value(out).clone())
}
