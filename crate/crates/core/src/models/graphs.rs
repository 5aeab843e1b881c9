//! Graph models on `(A, X)`: message passing with a configurable
//! aggregation, the normalized 2-IGN, and the GGNN / continuous GGNN layers
//! with their Horner-evaluated message nonlinearity.

use std::rc::Rc;

use crate::consistent::SizedObject;
use crate::error::{invalid, Result};
use crate::models::mlp::{apply_act, chain, param, Mlp};
use crate::models::params::ParamStore;
use crate::models::spec::{Aggregation, Family, ModelSpec};
use crate::models::tape::{Tape, Var};
use crate::models::Traced;
use crate::tensor::{op_norm_2, Matrix, RngStream};

fn graph_input(spec: &ModelSpec, input: &SizedObject) -> Result<(Matrix, Matrix)> {
    let SizedObject::GraphSignal { adj, x } = input else {
        return Err(invalid(format!("graph model got a {}", input.kind_name())));
    };
    if !adj.is_symmetric(1e-12) {
        return Err(invalid("graph models need a symmetric adjacency"));
    }
    if x.cols() != spec.in_dim {
        return Err(invalid(format!("expected {} signal channels, got {}", spec.in_dim, x.cols())));
    }
    if adj.rows() == 0 {
        return Err(invalid("empty graph"));
    }
    Ok((adj.clone(), x.clone()))
}

fn layer_dims(spec: &ModelSpec, first: usize, l: usize) -> (usize, usize) {
    let d_in = if l == 0 { first } else { spec.hidden };
    let d_out = if l + 1 == spec.depth { spec.out_dim } else { spec.hidden };
    (d_in, d_out)
}

pub(crate) fn register(spec: &ModelSpec, store: &mut ParamStore, rng: &mut RngStream) -> Result<()> {
    match spec.family {
        Family::Mpnn => {
            for l in 0..spec.depth {
                let (xi, phi) = mpnn_layer(spec, l)?;
                xi.init(store, rng)?;
                phi.init(store, rng)?;
            }
        }
        Family::Ign2Norm => {
            for l in 0..spec.depth {
                let (c_in, c_out) = layer_dims(spec, 1 + spec.in_dim, l);
                let bound = (1.0 / (15 * c_in + 2) as f64).sqrt();
                for k in 1..=15 {
                    store.add_uniform(&format!("ign{l}.a{k}"), c_in, c_out, bound, rng)?;
                }
                store.add_uniform(&format!("ign{l}.b1"), 1, c_out, bound, rng)?;
                store.add_uniform(&format!("ign{l}.b2"), 1, c_out, bound, rng)?;
            }
        }
        Family::Ggnn | Family::Cggnn => {
            let full = spec.family == Family::Ggnn;
            for l in 0..spec.depth {
                let (d_in, d_out) = layer_dims(spec, spec.in_dim, l);
                let ba = (1.0 / (6 + 2 * d_in) as f64).sqrt();
                let bx = (1.0 / ((spec.degree + 1) * (2 * d_in + 5)) as f64).sqrt();
                for (name, keep) in [("alpha1", true), ("alpha2", true), ("alpha3", full), ("alpha4", true), ("alpha5", full)] {
                    if keep {
                        store.add_uniform(&format!("layer{l}.{name}"), 1, 1, ba, rng)?;
                    }
                }
                store.add_uniform(&format!("layer{l}.alpha6"), d_in, 1, ba, rng)?;
                store.add_uniform(&format!("layer{l}.alpha7"), d_in, 1, ba, rng)?;
                if full {
                    store.add_uniform(&format!("layer{l}.beta1"), 1, 1, ba, rng)?;
                }
                for s in 0..=spec.degree {
                    let p = format!("layer{l}.s{s}");
                    store.add_uniform(&format!("{p}.theta_a"), d_in, d_out, bx, rng)?;
                    store.add_uniform(&format!("{p}.theta_b"), d_in, d_out, bx, rng)?;
                    for (name, keep) in [("theta1", true), ("theta2", full), ("theta3", full), ("theta4", true), ("beta2", full)] {
                        if keep {
                            store.add_uniform(&format!("{p}.{name}"), 1, d_out, bx, rng)?;
                        }
                    }
                }
            }
        }
        other => return Err(invalid(format!("{other:?} is not a graph model"))),
    }
    Ok(())
}

pub(crate) fn trace(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, input: &SizedObject) -> Result<Traced> {
    let (a, x) = graph_input(spec, input)?;
    match spec.family {
        Family::Mpnn => trace_mpnn(spec, store, tape, a, x),
        Family::Ign2Norm => trace_ign(spec, store, tape, a, x),
        Family::Ggnn | Family::Cggnn => trace_ggnn(spec, store, tape, a, x),
        other => Err(invalid(format!("{other:?} is not a graph model"))),
    }
}

fn mpnn_layer(spec: &ModelSpec, l: usize) -> Result<(Mlp, Mlp)> {
    let (d_in, d_out) = layer_dims(spec, spec.in_dim, l);
    let (h, k) = (spec.hidden, spec.mlp_layers);
    let xi = Mlp::describe(&format!("mpnn{l}.xi"), chain(d_in, h, h, k), true)?;
    let phi = Mlp::describe(&format!("mpnn{l}.phi"), chain(d_in + h, h, d_out, k), true)?;
    Ok((xi, phi))
}

/// `X_i ← φ(X_i, Agg_j A_ij ξ(X_j))`.
fn trace_mpnn(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, a: Matrix, x: Matrix) -> Result<Traced> {
    let n = a.rows();
    let degrees: Rc<Vec<f64>> = Rc::new(
        (0..n)
            .map(|i| {
                let d = a.row(i).iter().filter(|v| **v != 0.0).count();
                if d == 0 {
                    0.0
                } else {
                    1.0 / d as f64
                }
            })
            .collect(),
    );
    let av = tape.leaf(a);
    let input = tape.leaf(x);
    let mut h = input;
    for l in 0..spec.depth {
        let (xi, phi) = mpnn_layer(spec, l)?;
        let msg = xi.forward(tape, store, h, spec.activation)?;
        let agg = match spec.mpnn_aggregation() {
            Aggregation::Max => tape.neighbor_max(av, msg),
            agg => {
                let s = tape.matmul(av, msg);
                match agg {
                    Aggregation::Sum => s,
                    Aggregation::Mean => tape.row_scale_const(s, degrees.clone()),
                    _ => tape.scale(s, 1.0 / n as f64),
                }
            }
        };
        let cat = tape.concat_cols(vec![h, agg]);
        h = phi.forward(tape, store, cat, spec.activation)?;
        if l + 1 < spec.depth {
            h = apply_act(tape, h, spec.activation);
        }
    }
    Ok(Traced {
        input,
        pred: h,
        adj: Some(av),
    })
}

/// One normalized 2-IGN layer. With `r = A1/n`, `c = Aᵀ1/n`, `d = diag(A)`,
/// `t = 1ᵀA1/n²` and `τ = tr(A)`, output channel `o` is
/// `Σ_c a1 A_c + a2 A_cᵀ + u1ᵀ + 1wᵀ + diag(z) + s11ᵀ + eI` where
/// `u = a4 r + a7 c + a14 d`, `w = a5 r + a8 c + a15 d`,
/// `z = a3 d + a6 r + a9 c`, `s = a10 t + a12 τ + b1`, `e = a11 t + a13 τ + b2`.
fn ign_layer(store: &ParamStore, tape: &mut Tape, l: usize, channels: &[Var], n: usize) -> Result<Vec<Var>> {
    let nf = n as f64;
    let (mut ds, mut rs, mut cs, mut ts, mut trs) = (vec![], vec![], vec![], vec![], vec![]);
    for &ch in channels {
        let d = tape.diag_extract(ch);
        rs.push(tape.row_sums(ch));
        let col = tape.sum_rows(ch);
        cs.push(tape.reshape(col, n, 1));
        ts.push(tape.sum_all(ch));
        trs.push(tape.sum_all(d));
        ds.push(d);
    }
    let d = tape.concat_cols(ds);
    let r = tape.concat_cols(rs);
    let r = tape.scale(r, 1.0 / nf);
    let c = tape.concat_cols(cs);
    let c = tape.scale(c, 1.0 / nf);
    let t = tape.concat_cols(ts);
    let t = tape.scale(t, 1.0 / (nf * nf));
    let tr = tape.concat_cols(trs);
    let mut a = Vec::with_capacity(15);
    for k in 1..=15 {
        a.push(param(tape, store, &format!("ign{l}.a{k}"))?);
    }
    let b1 = param(tape, store, &format!("ign{l}.b1"))?;
    let b2 = param(tape, store, &format!("ign{l}.b2"))?;
    let mut lin = |terms: &[(Var, usize)], bias: Option<Var>| {
        let mut acc = bias;
        for &(v, k) in terms {
            let p = tape.matmul(v, a[k - 1]);
            acc = Some(match acc {
                Some(prev) => tape.add(prev, p),
                None => p,
            });
        }
        acc.expect("nonempty")
    };
    let u = lin(&[(r, 4), (c, 7), (d, 14)], None);
    let w = lin(&[(r, 5), (c, 8), (d, 15)], None);
    let z = lin(&[(d, 3), (r, 6), (c, 9)], None);
    let s = lin(&[(t, 10), (tr, 12)], Some(b1));
    let e = lin(&[(t, 11), (tr, 13)], Some(b2));
    let c_out = tape.value(a[0]).cols();
    let mut out = Vec::with_capacity(c_out);
    for o in 0..c_out {
        let w1 = tape.select_col(a[0], o);
        let w2 = tape.select_col(a[1], o);
        let (uo, wo, zo) = (tape.select_col(u, o), tape.select_col(w, o), tape.select_col(z, o));
        let (so, eo) = (tape.select_col(s, o), tape.select_col(e, o));
        out.push(tape.ign_combine(channels.to_vec(), w1, w2, uo, wo, zo, so, eo));
    }
    Ok(out)
}

/// Node signals enter as extra diagonal channels `diag(X_j)`; the node-level
/// readout is the row mean `(1/n) A'1` of each output channel.
fn trace_ign(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, a: Matrix, x: Matrix) -> Result<Traced> {
    let n = a.rows();
    let input = tape.leaf(a);
    let mut channels = vec![input];
    for j in 0..x.cols() {
        channels.push(tape.leaf(Matrix::diag(&x.col(j))));
    }
    for l in 0..spec.depth {
        channels = ign_layer(store, tape, l, &channels, n)?;
        if l + 1 < spec.depth {
            channels = channels.into_iter().map(|c| apply_act(tape, c, spec.activation)).collect();
        }
    }
    let means: Vec<Var> = channels
        .iter()
        .map(|&c| {
            let r = tape.row_sums(c);
            tape.scale(r, 1.0 / n as f64)
        })
        .collect();
    let pred = tape.concat_cols(means);
    Ok(Traced {
        input,
        pred,
        adj: Some(channels[0]),
    })
}

fn opt_param(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Option<Var>> {
    if store.entry(name).is_some() {
        param(tape, store, name).map(Some)
    } else {
        Ok(None)
    }
}

fn sum_terms(tape: &mut Tape, terms: Vec<Var>) -> Var {
    let mut it = terms.into_iter();
    let first = it.next().expect("at least one term");
    it.fold(first, |acc, t| tape.add(acc, t))
}

/// Linear part of a GGNN layer: `(A', [X'_0, …, X'_S])`. Coefficients
/// missing from the store (the continuous variant) contribute nothing.
fn ggnn_linear(store: &ParamStore, tape: &mut Tape, l: usize, degree: usize, a: Var, x: Var) -> Result<(Var, Vec<Var>)> {
    let n = tape.value(a).rows();
    let nf = n as f64;
    let p = |k: &str| format!("layer{l}.{k}");
    let rs = tape.row_sums(a);
    let r = tape.scale(rs, 1.0 / nf);
    let d = tape.diag_extract(a);
    let total = tape.sum_all(a);
    let t = tape.scale(total, 1.0 / (nf * nf));
    let tr = tape.sum_all(d);
    let trn = tape.scale(tr, 1.0 / nf);
    let xmean = tape.mean_rows(x);

    let alpha1 = param(tape, store, &p("alpha1"))?;
    let alpha2 = param(tape, store, &p("alpha2"))?;
    let alpha4 = param(tape, store, &p("alpha4"))?;
    let alpha6 = param(tape, store, &p("alpha6"))?;
    let alpha7 = param(tape, store, &p("alpha7"))?;
    let mut u_terms = vec![tape.mul_scalar(r, alpha4), tape.matmul(x, alpha6)];
    if let Some(alpha5) = opt_param(tape, store, &p("alpha5"))? {
        u_terms.push(tape.mul_scalar(d, alpha5));
    }
    let u = sum_terms(tape, u_terms);
    let mut s_terms = vec![tape.mul_scalar(t, alpha2), tape.matmul(xmean, alpha7)];
    if let Some(alpha3) = opt_param(tape, store, &p("alpha3"))? {
        s_terms.push(tape.mul_scalar(trn, alpha3));
    }
    if let Some(beta1) = opt_param(tape, store, &p("beta1"))? {
        s_terms.push(beta1);
    }
    let s = sum_terms(tape, s_terms);
    let a_new = tape.sym_combine(a, alpha1, u, s);

    let mut slots = Vec::with_capacity(degree + 1);
    for k in 0..=degree {
        let q = |name: &str| format!("layer{l}.s{k}.{name}");
        let theta_a = param(tape, store, &q("theta_a"))?;
        let theta_b = param(tape, store, &q("theta_b"))?;
        let theta1 = param(tape, store, &q("theta1"))?;
        let theta4 = param(tape, store, &q("theta4"))?;
        let mut row_terms = vec![tape.matmul(xmean, theta_b), tape.mul_scalar(theta4, t)];
        if let Some(theta3) = opt_param(tape, store, &q("theta3"))? {
            row_terms.push(tape.mul_scalar(theta3, trn));
        }
        if let Some(beta2) = opt_param(tape, store, &q("beta2"))? {
            row_terms.push(beta2);
        }
        let row = sum_terms(tape, row_terms);
        let mut terms = vec![tape.matmul(x, theta_a), tape.row_broadcast(row, n), tape.matmul(r, theta1)];
        if let Some(theta2) = opt_param(tape, store, &q("theta2"))? {
            terms.push(tape.matmul(d, theta2));
        }
        slots.push(sum_terms(tape, terms));
    }
    Ok((a_new, slots))
}

/// `Σ_s n^{-s} A'^s X'_s`, evaluated as `X'_0 + (1/n)A'(X'_1 + (1/n)A'(…))`.
fn contract(tape: &mut Tape, a: Var, slots: &[Var]) -> Var {
    let n = tape.value(a).rows() as f64;
    let mut y = *slots.last().expect("at least one slot");
    for &xs in slots[..slots.len() - 1].iter().rev() {
        let ay = tape.matmul(a, y);
        let ay = tape.scale(ay, 1.0 / n);
        y = tape.add(xs, ay);
    }
    y
}

/// The last layer keeps the identity nonlinearity so outputs are unbounded
/// in sign.
fn trace_ggnn(spec: &ModelSpec, store: &ParamStore, tape: &mut Tape, a: Matrix, x: Matrix) -> Result<Traced> {
    let mut av = tape.leaf(a);
    let input = tape.leaf(x);
    let mut h = input;
    for l in 0..spec.depth {
        let (a_new, slots) = ggnn_linear(store, tape, l, spec.degree, av, h)?;
        h = contract(tape, a_new, &slots);
        if l + 1 < spec.depth {
            h = apply_act(tape, h, spec.activation);
        }
        av = a_new;
    }
    Ok(Traced {
        input,
        pred: h,
        adj: Some(av),
    })
}

/// Value of the linear part of GGNN/CGGNN layer `l` at `(A, X)`, with the
/// bias terms `β` set to zero.
pub fn ggnn_linear_map(store: &ParamStore, l: usize, degree: usize, a: &Matrix, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
    let mut unbiased = store.clone();
    unbiased.zero_except(|name| !(name.starts_with(&format!("layer{l}.")) && name.contains("beta")));
    let mut tape = Tape::new();
    let av = tape.leaf(a.clone());
    let xv = tape.leaf(x.clone());
    let (a_new, slots) = ggnn_linear(&unbiased, &mut tape, l, degree, av, xv)?;
    Ok((
        tape.value(a_new).clone(),
        slots.iter().map(|s| tape.value(*s).clone()).collect(),
    ))
}

fn scalar(store: &ParamStore, name: &str) -> Result<f64> {
    match store.entry(name) {
        Some(_) => Ok(store.matrix(name)?[(0, 0)]),
        None => Ok(0.0),
    }
}

fn abs_sum(store: &ParamStore, name: &str) -> Result<f64> {
    match store.entry(name) {
        Some(_) => Ok(store.matrix(name)?.data().iter().map(|v| v.abs()).sum()),
        None => Ok(0.0),
    }
}

fn max_col_abs_sum(m: &Matrix) -> f64 {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Upper bound on the operator norm of the bias-free linear part of layer
/// `l`. For GGNN the norm on `(A, X)` is `max(max|A_ij|, max|X_ij|)`; for
/// CGGNN it is `max(‖A‖_op/n, ‖X‖_F/√n)`. The output norm is the maximum
/// over `A'` and every slot `X'_s`.
///
/// The `α6` term `X_j1ᵀ + 1X_jᵀ` can reach twice the norm of `X_j` (take
/// `X_j = 1`), so it enters with coefficient `2|α6,j|`.
pub fn ggnn_layer_bound(store: &ParamStore, family: Family, l: usize, degree: usize) -> Result<f64> {
    let p = |k: &str| format!("layer{l}.{k}");
    let a_part = scalar(store, &p("alpha1"))?.abs()
        + scalar(store, &p("alpha2"))?.abs()
        + scalar(store, &p("alpha3"))?.abs()
        + 2.0 * scalar(store, &p("alpha4"))?.abs()
        + 2.0 * scalar(store, &p("alpha5"))?.abs()
        + 2.0 * abs_sum(store, &p("alpha6"))?
        + abs_sum(store, &p("alpha7"))?;
    let mut x_part: f64 = 0.0;
    for s in 0..=degree {
        let q = |k: &str| format!("layer{l}.s{s}.{k}");
        let ta = store.matrix(&q("theta_a"))?;
        let tb = store.matrix(&q("theta_b"))?;
        let slot = match family {
            Family::Ggnn => {
                let mut v = max_col_abs_sum(&ta) + max_col_abs_sum(&tb);
                for name in ["theta1", "theta2", "theta3", "theta4"] {
                    if store.entry(&q(name)).is_some() {
                        v += store.matrix(&q(name))?.max_abs();
                    }
                }
                v
            }
            Family::Cggnn => {
                op_norm_rect(&ta)?
                    + op_norm_rect(&tb)?
                    + store.matrix(&q("theta1"))?.frobenius()
                    + store.matrix(&q("theta4"))?.frobenius()
            }
            other => return Err(invalid(format!("no layer bound for {other:?}"))),
        };
        x_part = x_part.max(slot);
    }
    Ok(a_part.max(x_part))
}

/// Spectral norm of a rectangular matrix via its Gram matrix.
fn op_norm_rect(m: &Matrix) -> Result<f64> {
    Ok(op_norm_2(&m.t_matmul(m))?.sqrt())
}

/// Norm of `(A, X)` used by [`ggnn_layer_bound`] for `family`.
pub fn ggnn_layer_norm(family: Family, a: &Matrix, x: &Matrix) -> Result<f64> {
    let n = a.rows() as f64;
    match family {
        Family::Ggnn => Ok(a.max_abs().max(x.max_abs())),
        _ => Ok((op_norm_2(a)? / n).max(x.frobenius() / n.sqrt())),
    }
}
