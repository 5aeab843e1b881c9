//! Point-cloud models invariant to relabeling and orthogonal transforms:
//! DS-CI (Gram-matrix statistics fed to normalized DeepSets) and SVD-DS
//! (a normalized DeepSet on the SVD-canonicalized cloud).

use std::rc::Rc;

use crate::consistent::SizedObject;
use crate::error::{invalid, Result};
use crate::models::mlp::{apply_act, chain, Mlp};
use crate::models::params::ParamStore;
use crate::models::spec::{DsciVariant, Family, ModelSpec};
use crate::models::tape::Tape;
use crate::models::{sets, Traced};
use crate::tensor::{svd, RngStream};

struct DsciParts {
    rho_diag: Mlp,
    sigma_diag: Mlp,
    rho_off: Mlp,
    sigma_off: Mlp,
    scalar: Mlp,
    combine: Mlp,
}

fn dsci_parts(spec: &ModelSpec) -> Result<DsciParts> {
    let (h, l) = (spec.hidden, spec.mlp_layers);
    Ok(DsciParts {
        rho_diag: Mlp::describe("diag.rho", chain(1, h, h, l), true)?,
        sigma_diag: Mlp::describe("diag.sigma", chain(h, h, h, l), true)?,
        rho_off: Mlp::describe("off.rho", chain(1, h, h, l), true)?,
        sigma_off: Mlp::describe("off.sigma", chain(h, h, h, l), true)?,
        scalar: Mlp::describe("moment", chain(1, h, h, l), true)?,
        combine: Mlp::describe("combine", chain(3 * h, h, spec.out_dim, l), true)?,
    })
}

pub(crate) fn register(spec: &ModelSpec, store: &mut ParamStore, rng: &mut RngStream) -> Result<()> {
    match spec.family {
        Family::Dsci(_) => {
            let p = dsci_parts(spec)?;
            for m in [&p.rho_diag, &p.sigma_diag, &p.rho_off, &p.sigma_off, &p.scalar, &p.combine] {
                m.init(store, rng)?;
            }
            Ok(())
        }
        _ => sets::register(spec, store, rng),
    }
}

fn strict_upper(n: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            idx.push(i * n + j);
        }
    }
    idx
}

fn cloud_input(spec: &ModelSpec, input: &SizedObject) -> Result<crate::Matrix> {
    let SizedObject::PointCloud(x) = input else {
        return Err(invalid(format!("point-cloud model got a {}", input.kind_name())));
    };
    if x.cols() != spec.in_dim || x.rows() == 0 {
        return Err(invalid(format!("expected a nonempty n x {} cloud, got {:?}", spec.in_dim, x.shape())));
    }
    Ok(x.clone())
}

/// Sorting the statistics before a mean-aggregated DeepSet does not change
/// its value, so the entries are fed in storage order.
pub(crate) fn trace(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, input: &SizedObject) -> Result<Traced> {
    let x = cloud_input(spec, input)?;
    let n = x.rows();
    match spec.family {
        Family::Dsci(variant) => {
            if variant == DsciVariant::Normalized && n < 2 {
                return Err(invalid("normalized DS-CI needs at least two points"));
            }
            let p = dsci_parts(spec)?;
            let v = tape.leaf(x);
            let gram = tape.matmul_t(v, v);
            let diag = tape.diag_extract(gram);
            let rs = tape.row_sums(gram);
            let weighted = tape.hadamard(diag, rs);
            let weighted = tape.sum_all(weighted);
            let nf = n as f64;
            let (off, moment) = match variant {
                DsciVariant::Normalized => {
                    let off = tape.gather(gram, Rc::new(strict_upper(n)));
                    let sq = tape.hadamard(diag, diag);
                    let sq = tape.sum_all(sq);
                    let m = tape.sub(weighted, sq);
                    (off, tape.scale(m, 1.0 / (nf * (nf - 1.0))))
                }
                DsciVariant::Compatible => (tape.reshape(gram, n * n, 1), tape.scale(weighted, 1.0 / (nf * nf))),
            };
            let act = spec.activation;
            let h1 = p.rho_diag.forward(tape, store, diag, act)?;
            let h1 = tape.mean_rows(h1);
            let h1 = p.sigma_diag.forward(tape, store, h1, act)?;
            let h2 = p.rho_off.forward(tape, store, off, act)?;
            let h2 = tape.mean_rows(h2);
            let h2 = p.sigma_off.forward(tape, store, h2, act)?;
            let h3 = p.scalar.forward(tape, store, moment, act)?;
            let cat = tape.concat_cols(vec![h1, h2, h3]);
            let cat = apply_act(tape, cat, act);
            let pred = p.combine.forward(tape, store, cat, act)?;
            Ok(Traced {
                input: v,
                pred,
                adj: None,
            })
        }
        Family::SvdDs => {
            if spec.in_dim > n {
                return Err(invalid(format!("SVD-DS needs at least {} points, got {n}", spec.in_dim)));
            }
            let s = svd(&x)?;
            let xv = tape.leaf(x);
            let y = tape.svd_project(xv, s);
            let pred = sets::aggregate_readout(spec, store, tape, y, Family::NormDeepSet)?;
            Ok(Traced {
                input: xv,
                pred,
                adj: None,
            })
        }
        other => Err(invalid(format!("{other:?} is not a point-cloud model"))),
    }
}
