use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{Matrix, RngStream};

const SYM_TOL: f64 = 1e-12;

/// An element of one of the spaces `V_n` of a consistent sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizedObject {
    /// `n` elements with `d` features each, one per row.
    Set(Matrix),
    /// Symmetric `n x n` adjacency with `n x d` node features.
    GraphSignal { adj: Matrix, x: Matrix },
    /// `n` points in `R^k`, one per row.
    PointCloud(Matrix),
    /// Size-independent value, e.g. the output of an invariant model.
    Vector(Vec<f64>),
}

impl SizedObject {
    pub fn set(x: Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(invalid("set must have at least one row"));
        }
        Ok(Self::Set(x))
    }

    pub fn graph(adj: Matrix, x: Matrix) -> Result<Self> {
        if !adj.is_square() || adj.rows() == 0 {
            return Err(invalid(format!("adjacency must be square and nonempty, got {:?}", adj.shape())));
        }
        if !adj.is_symmetric(SYM_TOL) {
            return Err(invalid("adjacency is not symmetric"));
        }
        if x.rows() != adj.rows() {
            return Err(invalid(format!(
                "signal has {} rows but graph has {} nodes",
                x.rows(),
                adj.rows()
            )));
        }
        Ok(Self::GraphSignal { adj, x })
    }

    pub fn cloud(x: Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(invalid("point cloud must have at least one point"));
        }
        Ok(Self::PointCloud(x))
    }

    pub fn scalar(v: f64) -> Self {
        Self::Vector(vec![v])
    }

    /// Number of elements/nodes/points; 1 for [`SizedObject::Vector`].
    pub fn n(&self) -> usize {
        match self {
            Self::Set(x) | Self::PointCloud(x) => x.rows(),
            Self::GraphSignal { adj, .. } => adj.rows(),
            Self::Vector(_) => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Set(_) => "set",
            Self::GraphSignal { .. } => "graph_signal",
            Self::PointCloud(_) => "point_cloud",
            Self::Vector(_) => "vector",
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Self::Vector(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }

    /// Feature payload: the set/cloud matrix, the graph signal, or the vector as a row.
    pub fn features(&self) -> Matrix {
        match self {
            Self::Set(x) | Self::PointCloud(x) => x.clone(),
            Self::GraphSignal { x, .. } => x.clone(),
            Self::Vector(v) => Matrix::from_vec(1, v.len(), v.clone()).expect("row vector"),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Self::Set(x) | Self::PointCloud(x) => x.is_finite(),
            Self::GraphSignal { adj, x } => adj.is_finite() && x.is_finite(),
            Self::Vector(v) => v.iter().all(|e| e.is_finite()),
        }
    }

    /// Entrywise difference of two objects of the same kind and shape.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        let shape_err = || invalid(format!("cannot subtract {} from {}", other.kind_name(), self.kind_name()));
        match (self, other) {
            (Self::Set(a), Self::Set(b)) if a.shape() == b.shape() => Ok(Self::Set(a.sub(b))),
            (Self::PointCloud(a), Self::PointCloud(b)) if a.shape() == b.shape() => Ok(Self::PointCloud(a.sub(b))),
            (Self::GraphSignal { adj: a, x }, Self::GraphSignal { adj: b, x: y })
                if a.shape() == b.shape() && x.shape() == y.shape() =>
            {
                Ok(Self::GraphSignal {
                    adj: a.sub(b),
                    x: x.sub(y),
                })
            }
            (Self::Vector(a), Self::Vector(b)) if a.len() == b.len() => {
                Ok(Self::Vector(a.iter().zip(b).map(|(p, q)| p - q).collect()))
            }
            _ => Err(shape_err()),
        }
    }
}

/// Which consistent sequence an object is viewed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    ZeroPadSet,
    DupSet,
    DupGraph,
    DupPointCloud,
    /// Constant sequence `V_n = R^c` with identity embeddings.
    Trivial,
}

impl SequenceKind {
    pub fn admits(self, x: &SizedObject) -> bool {
        matches!(
            (self, x),
            (Self::ZeroPadSet | Self::DupSet, SizedObject::Set(_))
                | (Self::DupGraph, SizedObject::GraphSignal { .. })
                | (Self::DupPointCloud, SizedObject::PointCloud(_))
                | (Self::Trivial, SizedObject::Vector(_))
        )
    }

    /// Whether `V_n` embeds into `V_big`.
    pub fn embeds(self, n: usize, big: usize) -> bool {
        match self {
            Self::ZeroPadSet => big >= n,
            Self::DupSet | Self::DupGraph | Self::DupPointCloud => n > 0 && big >= n && big % n == 0,
            Self::Trivial => true,
        }
    }
}

fn repeat_rows(x: &Matrix, m: usize) -> Matrix {
    let idx: Vec<usize> = (0..x.rows() * m).map(|r| r / m).collect();
    x.select_rows(&idx)
}

/// Embeds `x` into the size-`big` space of `seq`.
///
/// Duplication repeats each row (and, for adjacencies, each row/column
/// block) `big / n` times consecutively; zero-padding appends zero rows.
pub fn embed(x: &SizedObject, seq: SequenceKind, big: usize) -> Result<SizedObject> {
    if !seq.admits(x) {
        return Err(Error::Embed(format!("{seq:?} does not contain a {}", x.kind_name())));
    }
    let n = x.n();
    if !seq.embeds(n, big) {
        return Err(Error::Embed(format!("{seq:?}: size {n} does not embed into {big}")));
    }
    Ok(match (seq, x) {
        (SequenceKind::Trivial, _) => x.clone(),
        (SequenceKind::ZeroPadSet, SizedObject::Set(m)) => {
            SizedObject::Set(Matrix::vstack(&[m, &Matrix::zeros(big - n, m.cols())]))
        }
        (SequenceKind::DupSet, SizedObject::Set(m)) => SizedObject::Set(repeat_rows(m, big / n)),
        (SequenceKind::DupPointCloud, SizedObject::PointCloud(m)) => SizedObject::PointCloud(repeat_rows(m, big / n)),
        (SequenceKind::DupGraph, SizedObject::GraphSignal { adj, x }) => {
            let k = big / n;
            SizedObject::GraphSignal {
                adj: Matrix::from_fn(big, big, |i, j| adj[(i / k, j / k)]),
                x: repeat_rows(x, k),
            }
        }
        _ => unreachable!("admissibility checked above"),
    })
}

/// Element `(g, h)` of `S_n x O(k)`; `h` is only used for point clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    /// Row `i` of `g·x` is row `perm[i]` of `x`.
    pub perm: Vec<usize>,
    pub orth: Option<Matrix>,
}

impl GroupElement {
    pub fn new(perm: Vec<usize>, orth: Option<Matrix>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(invalid("perm is not a bijection"));
            }
            seen[p] = true;
        }
        if let Some(h) = &orth {
            if !h.is_square() || h.t_matmul(h).sub(&Matrix::identity(h.rows())).max_abs() > 1e-10 {
                return Err(invalid("orth is not orthogonal"));
            }
        }
        Ok(Self { perm, orth })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            orth: None,
        }
    }

    /// Uniform permutation and, if `k` is given, a Haar-random orthogonal `k x k`.
    pub fn random(n: usize, k: Option<usize>, rng: &mut RngStream) -> Self {
        let perm = rng.permutation(n);
        let orth = k.map(|k| random_orthogonal(k, rng));
        Self { perm, orth }
    }

    /// The image `θ(g)` of `g` in the size-`big` group of `seq`.
    pub fn embed(&self, seq: SequenceKind, big: usize) -> Result<Self> {
        let n = self.perm.len();
        if !seq.embeds(n, big) {
            return Err(Error::Embed(format!("{seq:?}: size {n} does not embed into {big}")));
        }
        let perm = match seq {
            SequenceKind::ZeroPadSet => self.perm.iter().copied().chain(n..big).collect(),
            SequenceKind::Trivial => self.perm.clone(),
            _ => {
                let k = big / n;
                (0..big).map(|r| self.perm[r / k] * k + r % k).collect()
            }
        };
        Ok(Self {
            perm,
            orth: self.orth.clone(),
        })
    }
}

/// Haar-distributed orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
pub fn random_orthogonal(k: usize, rng: &mut RngStream) -> Matrix {
    loop {
        let g = Matrix::from_vec(k, k, rng.gaussians(k * k)).expect("k*k entries");
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut ok = true;
        for j in 0..k {
            let mut c = g.col(j);
            for b in &cols {
                let d = crate::tensor::dot(&c, b);
                c.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let nrm = crate::tensor::norm2(&c);
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            c.iter_mut().for_each(|x| *x /= nrm);
            cols.push(c);
        }
        if ok {
            return Matrix::from_fn(k, k, |i, j| cols[j][i]);
        }
    }
}

/// Applies `g` to `x`: rows permuted, adjacency conjugated, point clouds
/// additionally right-multiplied by `hᵀ`. Vectors are fixed.
pub fn act(g: &GroupElement, x: &SizedObject) -> Result<SizedObject> {
    if let SizedObject::Vector(_) = x {
        return Ok(x.clone());
    }
    let n = x.n();
    if g.perm.len() != n {
        return Err(invalid(format!("group element of size {} acting on size {n}", g.perm.len())));
    }
    Ok(match x {
        SizedObject::Set(m) => SizedObject::Set(m.select_rows(&g.perm)),
        SizedObject::GraphSignal { adj, x } => SizedObject::GraphSignal {
            adj: Matrix::from_fn(n, n, |i, j| adj[(g.perm[i], g.perm[j])]),
            x: x.select_rows(&g.perm),
        },
        SizedObject::PointCloud(m) => {
            let p = m.select_rows(&g.perm);
            match &g.orth {
                Some(h) => {
                    if h.rows() != m.cols() {
                        return Err(invalid(format!(
                            "orthogonal factor is {}x{} but points live in R^{}",
                            h.rows(),
                            h.cols(),
                            m.cols()
                        )));
                    }
                    SizedObject::PointCloud(p.matmul_t(h))
                }
                None => SizedObject::PointCloud(p),
            }
        }
        SizedObject::Vector(_) => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column(v)
    }

    #[test]
    fn duplication_and_padding() {
        let x = SizedObject::Set(col(&[1.0, 2.0]));
        assert_eq!(
            embed(&x, SequenceKind::DupSet, 4).unwrap(),
            SizedObject::Set(col(&[1.0, 1.0, 2.0, 2.0]))
        );
        assert_eq!(
            embed(&x, SequenceKind::ZeroPadSet, 4).unwrap(),
            SizedObject::Set(col(&[1.0, 2.0, 0.0, 0.0]))
        );
        assert!(matches!(embed(&x, SequenceKind::DupSet, 3), Err(Error::Embed(_))));
        assert!(embed(&x, SequenceKind::ZeroPadSet, 3).is_ok());
    }

    #[test]
    fn graph_duplication_blocks() {
        let adj = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let g = SizedObject::graph(adj, col(&[1.0, 2.0])).unwrap();
        let SizedObject::GraphSignal { adj, x } = embed(&g, SequenceKind::DupGraph, 4).unwrap() else {
            panic!("kind changed");
        };
        let want = Matrix::from_rows(&[
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(adj, want);
        assert_eq!(x, col(&[1.0, 1.0, 2.0, 2.0]));
    }

    #[test]
    fn actions() {
        let x = SizedObject::Set(col(&[1.0, 2.0]));
        let swap = GroupElement::new(vec![1, 0], None).unwrap();
        assert_eq!(act(&swap, &x).unwrap(), SizedObject::Set(col(&[2.0, 1.0])));
        assert_eq!(act(&GroupElement::identity(2), &x).unwrap(), x);

        let cloud = SizedObject::PointCloud(Matrix::identity(2));
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let g = GroupElement::new(vec![0, 1], Some(rot)).unwrap();
        let SizedObject::PointCloud(y) = act(&g, &cloud).unwrap() else {
            panic!()
        };
        assert_eq!(y, Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap());
        assert_eq!(y.row_norms(), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_group_elements() {
        assert!(GroupElement::new(vec![0, 0], None).is_err());
        assert!(GroupElement::new(vec![0], Some(Matrix::filled(2, 2, 1.0))).is_err());
        let x = SizedObject::Set(col(&[1.0, 2.0, 3.0]));
        assert!(act(&GroupElement::identity(2), &x).is_err());
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut r = RngStream::new(4);
        for k in 1..5 {
            let h = random_orthogonal(k, &mut r);
            assert!(h.t_matmul(&h).sub(&Matrix::identity(k)).max_abs() < 1e-12);
        }
    }
}
