use serde::{Deserialize, Serialize};

use crate::consistent::{check_compatibility, CheckReport, SequenceKind, SizedObject};
use crate::error::Result;
use crate::models::{Family, Model, ModelSpec};
use crate::tensor::{Matrix, RngStream};

/// Deviation a witness must exceed to count as an incompatibility.
pub const WITNESS_MIN: f64 = 0.1;

/// The (model, sequence) pairs that are compatible by construction.
/// DeepSet under zero padding needs `ρ(0) = 0`, so its encoder has no biases.
pub fn compatible_pairs(in_dim: usize) -> Vec<(ModelSpec, SequenceKind)> {
    use crate::models::DsciVariant;
    vec![
        (ModelSpec::new(Family::DeepSet, in_dim).rho_bias(false), SequenceKind::ZeroPadSet),
        (ModelSpec::new(Family::NormDeepSet, in_dim), SequenceKind::DupSet),
        (ModelSpec::new(Family::PointNet, in_dim), SequenceKind::DupSet),
        (ModelSpec::new(Family::Mpnn, in_dim), SequenceKind::DupGraph),
        (ModelSpec::new(Family::Ggnn, in_dim), SequenceKind::DupGraph),
        (ModelSpec::new(Family::Cggnn, in_dim), SequenceKind::DupGraph),
        (ModelSpec::new(Family::Dsci(DsciVariant::Compatible), in_dim), SequenceKind::DupPointCloud),
        (ModelSpec::new(Family::SvdDs, in_dim), SequenceKind::DupPointCloud),
    ]
}

/// The documented incompatible pairs.
pub fn incompatible_pairs() -> Vec<(Family, SequenceKind)> {
    vec![
        (Family::DeepSet, SequenceKind::DupSet),
        (Family::NormDeepSet, SequenceKind::ZeroPadSet),
        (Family::PointNet, SequenceKind::ZeroPadSet),
        (Family::Ign2Norm, SequenceKind::DupGraph),
    ]
}

/// An input on which a model visibly fails to commute with the embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub input: SizedObject,
    pub multiple: usize,
    pub deviation: f64,
}

fn deviation(model: &Model, x: &SizedObject, seq: SequenceKind, m: usize) -> Result<f64> {
    Ok(check_compatibility(model, std::slice::from_ref(x), seq, &[m])?.max_deviation)
}

/// The normalized 2-IGN whose only nonzero coefficient is the diagonal basis
/// element: it maps `A` to `diag(A)`, which duplication does not preserve.
pub fn ign_diagonal_model() -> Result<Model> {
    let mut m = Model::new(ModelSpec::new(Family::Ign2Norm, 0).depth(1), 0)?;
    m.params.values_mut().iter_mut().for_each(|v| *v = 0.0);
    m.params.set("ign0.a3", &Matrix::filled(1, 1, 1.0))?;
    Ok(m)
}

/// PointNet with one affine layer on each side, `ρ = id` and `σ = Σ`, so
/// `f(X) = Σ_c max_i X_ic`; padding all-negative rows with zeros lifts it to 0.
pub fn pointnet_identity_model(d: usize) -> Result<Model> {
    let mut m = Model::new(ModelSpec::new(Family::PointNet, d).hidden(d).mlp_layers(1), 0)?;
    m.params.set("rho.l0.w", &Matrix::identity(d))?;
    m.params.set("rho.l0.b", &Matrix::zeros(1, d))?;
    m.params.set("sigma.l0.w", &Matrix::ones(d, 1))?;
    m.params.set("sigma.l0.b", &Matrix::zeros(1, 1))?;
    Ok(m)
}

/// The model each documented incompatible pair is demonstrated on: the
/// hand-set models above for PointNet and 2-IGN, seeded random ones otherwise.
pub fn witness_model(family: Family, d: usize, seed: u64) -> Result<Model> {
    match family {
        Family::PointNet => pointnet_identity_model(d),
        Family::Ign2Norm => ign_diagonal_model(),
        _ => Model::new(ModelSpec::new(family, d), seed),
    }
}

/// Searches the documented witness inputs of an incompatible pair for one
/// with deviation above [`WITNESS_MIN`]; candidates grow in scale (four draws per scale) and the
/// largest deviation found is returned either way. `None` for pairs without
/// a documented witness.
pub fn find_witness(model: &Model, seq: SequenceKind, seed: u64) -> Result<Option<Witness>> {
    let fam = model.spec.family;
    let d = model.spec.in_dim;
    let mut rng = RngStream::new(seed);
    let (n, m, sign) = match (fam, seq) {
        (Family::DeepSet, SequenceKind::DupSet) => (4, 4, 0.0),
        (Family::NormDeepSet, SequenceKind::ZeroPadSet) => (4, 16, 0.0),
        (Family::PointNet, SequenceKind::ZeroPadSet) => (4, 2, -1.0),
        (Family::Ign2Norm, SequenceKind::DupGraph) => {
            let x = SizedObject::graph(Matrix::identity(2), Matrix::zeros(2, d))?;
            let dev = deviation(model, &x, seq, 2)?;
            return Ok(Some(Witness {
                input: x,
                multiple: 2,
                deviation: dev,
            }));
        }
        _ => return Ok(None),
    };
    let mut best: Option<Witness> = None;
    let scales = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    for scale in scales.iter().flat_map(|&s| std::iter::repeat(s).take(4)) {
        let vals: Vec<f64> = rng
            .gaussians(n * d)
            .into_iter()
            .map(|g| if sign < 0.0 { -scale * (g.abs() + 0.5) } else { scale * g })
            .collect();
        let x = SizedObject::set(Matrix::from_vec(n, d, vals)?)?;
        let dev = deviation(model, &x, seq, m)?;
        if best.as_ref().map_or(true, |b| dev > b.deviation) {
            best = Some(Witness {
                input: x,
                multiple: m,
                deviation: dev,
            });
        }
        if dev > WITNESS_MIN {
            break;
        }
    }
    Ok(best)
}

/// Randomized compatibility check on gaussian inputs of each size.
pub fn random_compat_check(
    model: &Model,
    seq: SequenceKind,
    sizes: &[usize],
    multiples: &[usize],
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = RngStream::new(seed);
    let d = model.spec.in_dim;
    let mut inputs = Vec::with_capacity(sizes.len() * trials);
    for &n in sizes {
        for _ in 0..trials {
            let x = Matrix::from_vec(n, d, rng.gaussians(n * d))?;
            inputs.push(match (seq, model.spec.family.is_graph()) {
                (SequenceKind::DupGraph, _) | (_, true) => {
                    let u = Matrix::from_vec(n, n, rng.uniforms(n * n))?;
                    SizedObject::graph(u.add(&u.transpose()).scale(0.5), x)?
                }
                (SequenceKind::DupPointCloud, _) => SizedObject::cloud(x)?,
                _ => SizedObject::set(x)?,
            });
        }
    }
    check_compatibility(model, &inputs, seq, multiples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_witnesses_exceed_threshold() {
        for (fam, seq) in incompatible_pairs() {
            let model = witness_model(fam, 2, 1).unwrap();
            let w = find_witness(&model, seq, 3).unwrap().unwrap();
            assert!(w.deviation > WITNESS_MIN, "{fam:?}/{seq:?}: {}", w.deviation);
        }
    }

    #[test]
    fn compatible_pairs_have_no_witness() {
        for (spec, seq) in compatible_pairs(2) {
            let model = Model::new(spec, 0).unwrap();
            assert!(find_witness(&model, seq, 0).unwrap().is_none());
            let rep = random_compat_check(&model, seq, &[4], &[2], 2, 1).unwrap();
            assert!(rep.pass, "{:?}", model.spec.family);
        }
    }
}
