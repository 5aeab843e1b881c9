//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every intermediate value in evaluation order. Calling
//! [`Tape::backward`] with a seed gradient on one node walks the records in
//! reverse, accumulating adjoints; gradients of parameter nodes can then be
//! scattered into a [`ParamStore`](crate::models::ParamStore).

use std::rc::Rc;

use crate::tensor::{svd_project_backward, Matrix, SvdResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param { offset: usize },
    MatMul(Var, Var),
    /// `a bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `x + 1 bᵀ` for a `1 x c` row `b`.
    AddRowBias(Var, Var),
    Scale(Var, f64),
    /// `x · s` for a `1 x 1` node `s`.
    MulScalar(Var, Var),
    Hadamard(Var, Var),
    Relu(Var),
    Tanh(Var),
    SumRows(Var),
    MeanRows(Var),
    /// Column-wise max; stores the winning row per column.
    MaxRows(Var, Vec<usize>),
    RowSums(Var),
    SumAll(Var),
    DiagExtract(Var),
    Reshape(Var),
    /// Flat (row-major) entries of the input, as a column.
    Gather(Var, Rc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    /// `1 x c` row repeated down `rows` rows.
    RowBroadcast(Var),
    RowScaleConst(Var, Rc<Vec<f64>>),
    SelectCol(Var, usize),
    /// `out[i,k] = max_{j: a_ij != 0} a_ij x[j,k]` (0 if `i` has no neighbors).
    NeighborMax { adj: Var, x: Var, arg: Vec<Option<usize>> },
    /// `Σ_c (w1_c A_c + w2_c A_cᵀ) + u 1ᵀ + 1 wᵀ + diag(z) + s 11ᵀ + e I`.
    IgnCombine {
        fulls: Vec<Var>,
        w1: Var,
        w2: Var,
        u: Var,
        w: Var,
        z: Var,
        s: Var,
        e: Var,
    },
    /// `α A + u 1ᵀ + 1 uᵀ + s 11ᵀ`.
    SymCombine { a: Var, alpha: Var, u: Var, s: Var },
    /// `X V(X)` with canonical right singular vectors.
    SvdProject { x: Var, svd: Box<SvdResult> },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Minimum gap between squared singular values for the SVD linearization.
pub const SVD_GAP_MIN: f64 = 1e-8;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    /// Set by `backward` when an SVD node sat at a near-degenerate input.
    pub degenerate_svd: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, value: Matrix, offset: usize) -> Var {
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.shape(), (1, self.value(x).cols()), "bias shape");
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            for (e, bb) in v.row_mut(i).iter_mut().zip(bias.row(0)) {
                *e += bb;
            }
        }
        self.push(v, Op::AddRowBias(x, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).scale(c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.value(s).shape(), (1, 1), "scalar shape");
        let c = self.value(s)[(0, 0)];
        let v = self.value(x).scale(c);
        self.push(v, Op::MulScalar(x, s))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).hadamard(self.value(b));
        self.push(v, Op::Hadamard(a, b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x).col_sums();
        self.push(v, Op::SumRows(x))
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let n = self.value(x).rows() as f64;
        let v = self.value(x).col_sums().scale(1.0 / n);
        self.push(v, Op::MeanRows(x))
    }

    /// Column-wise maximum; ties go to the lowest row index.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let mut arg = vec![0usize; m.cols()];
        let mut best = Matrix::zeros(1, m.cols());
        for j in 0..m.cols() {
            let mut b = f64::NEG_INFINITY;
            for i in 0..m.rows() {
                if m[(i, j)] > b {
                    b = m[(i, j)];
                    arg[j] = i;
                }
            }
            best[(0, j)] = b;
        }
        self.push(best, Op::MaxRows(x, arg))
    }

    pub fn row_sums(&mut self, x: Var) -> Var {
        let v = self.value(x).row_sums();
        self.push(v, Op::RowSums(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Matrix::filled(1, 1, self.value(x).sum());
        self.push(v, Op::SumAll(x))
    }

    pub fn diag_extract(&mut self, x: Var) -> Var {
        let v = Matrix::column(&self.value(x).diagonal());
        self.push(v, Op::DiagExtract(x))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(x).reshape(rows, cols).expect("reshape keeps the entry count");
        self.push(v, Op::Reshape(x))
    }

    pub fn gather(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Var {
        let data = self.value(x).data();
        let vals: Vec<f64> = idx.iter().map(|&i| data[i]).collect();
        self.push(Matrix::column(&vals), Op::Gather(x, idx))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Matrix::hstack(&mats);
        self.push(v, Op::ConcatCols(parts))
    }

    pub fn row_broadcast(&mut self, x: Var, rows: usize) -> Var {
        let r = self.value(x);
        assert_eq!(r.rows(), 1, "row_broadcast needs a row");
        let idx = vec![0usize; rows];
        let v = r.select_rows(&idx);
        self.push(v, Op::RowBroadcast(x))
    }

    pub fn row_scale_const(&mut self, x: Var, s: Rc<Vec<f64>>) -> Var {
        let mut v = self.value(x).clone();
        for (i, c) in s.iter().enumerate() {
            v.row_mut(i).iter_mut().for_each(|e| *e *= c);
        }
        self.push(v, Op::RowScaleConst(x, s))
    }

    /// Column `j` as an `r x 1` node.
    pub fn select_col(&mut self, x: Var, j: usize) -> Var {
        let v = Matrix::column(&self.value(x).col(j));
        self.push(v, Op::SelectCol(x, j))
    }

    pub fn neighbor_max(&mut self, adj: Var, x: Var) -> Var {
        let a = self.value(adj);
        let m = self.value(x);
        let (n, c) = (a.rows(), m.cols());
        let mut out = Matrix::zeros(n, c);
        let mut arg = vec![None; n * c];
        for i in 0..n {
            for k in 0..c {
                let mut best = f64::NEG_INFINITY;
                for j in 0..n {
                    let w = a[(i, j)];
                    if w != 0.0 {
                        let val = w * m[(j, k)];
                        if val > best {
                            best = val;
                            arg[i * c + k] = Some(j);
                        }
                    }
                }
                out[(i, k)] = if best.is_finite() { best } else { 0.0 };
            }
        }
        self.push(out, Op::NeighborMax { adj, x, arg })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn ign_combine(&mut self, fulls: Vec<Var>, w1: Var, w2: Var, u: Var, w: Var, z: Var, s: Var, e: Var) -> Var {
        let n = self.value(u).rows();
        let mut out = Matrix::zeros(n, n);
        for (c, f) in fulls.iter().enumerate() {
            let a = self.value(*f);
            let (c1, c2) = (self.value(w1).data()[c], self.value(w2).data()[c]);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += c1 * a[(i, j)] + c2 * a[(j, i)];
                }
            }
        }
        let (uu, ww, zz) = (self.value(u), self.value(w), self.value(z));
        let (ss, ee) = (self.value(s)[(0, 0)], self.value(e)[(0, 0)]);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += uu[(i, 0)] + ww[(j, 0)] + ss;
            }
            out[(i, i)] += zz[(i, 0)] + ee;
        }
        self.push(
            out,
            Op::IgnCombine {
                fulls,
                w1,
                w2,
                u,
                w,
                z,
                s,
                e,
            },
        )
    }

    pub fn sym_combine(&mut self, a: Var, alpha: Var, u: Var, s: Var) -> Var {
        let av = self.value(a);
        let n = av.rows();
        let al = self.value(alpha)[(0, 0)];
        let sv = self.value(s)[(0, 0)];
        let uu = self.value(u);
        let out = Matrix::from_fn(n, n, |i, j| al * av[(i, j)] + uu[(i, 0)] + uu[(j, 0)] + sv);
        self.push(out, Op::SymCombine { a, alpha, u, s })
    }

    pub fn svd_project(&mut self, x: Var, svd: SvdResult) -> Var {
        let v = self.value(x).matmul(&svd.right);
        self.push(v, Op::SvdProject { x, svd: Box::new(svd) })
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Propagates `seed = dL/d(out)` to every node that `out` depends on.
    pub fn backward(&mut self, out: Var, seed: Matrix) {
        assert_eq!(seed.shape(), self.value(out).shape(), "seed shape");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf | Op::Param { .. } => {}
                Op::MatMul(a, b) => {
                    Self::acc(&mut grads, *a, g.matmul_t(val(*b)));
                    Self::acc(&mut grads, *b, val(*a).t_matmul(&g));
                }
                Op::MatMulT(a, b) => {
                    Self::acc(&mut grads, *a, g.matmul(val(*b)));
                    Self::acc(&mut grads, *b, g.t_matmul(val(*a)));
                }
                Op::Add(a, b) => {
                    Self::acc(&mut grads, *a, g.clone());
                    Self::acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    Self::acc(&mut grads, *a, g.clone());
                    Self::acc(&mut grads, *b, g.scale(-1.0));
                }
                Op::AddRowBias(x, b) => {
                    Self::acc(&mut grads, *b, g.col_sums());
                    Self::acc(&mut grads, *x, g.clone());
                }
                Op::Scale(x, c) => Self::acc(&mut grads, *x, g.scale(*c)),
                Op::MulScalar(x, s) => {
                    let c = val(*s)[(0, 0)];
                    let ds = g.hadamard(val(*x)).sum();
                    Self::acc(&mut grads, *x, g.scale(c));
                    Self::acc(&mut grads, *s, Matrix::filled(1, 1, ds));
                }
                Op::Hadamard(a, b) => {
                    Self::acc(&mut grads, *a, g.hadamard(val(*b)));
                    Self::acc(&mut grads, *b, g.hadamard(val(*a)));
                }
                Op::Relu(x) => {
                    let d = g.zip_with(val(*x), |gg, xx| if xx > 0.0 { gg } else { 0.0 });
                    Self::acc(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let d = g.zip_with(&node.value, |gg, t| gg * (1.0 - t * t));
                    Self::acc(&mut grads, *x, d);
                }
                Op::SumRows(x) | Op::MeanRows(x) => {
                    let rows = val(*x).rows();
                    let c = if matches!(node.op, Op::MeanRows(_)) { 1.0 / rows as f64 } else { 1.0 };
                    let d = g.select_rows(&vec![0; rows]).scale(c);
                    Self::acc(&mut grads, *x, d);
                }
                Op::MaxRows(x, arg) => {
                    let (r, c) = val(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (j, &i) in arg.iter().enumerate() {
                        d[(i, j)] = g[(0, j)];
                    }
                    Self::acc(&mut grads, *x, d);
                }
                Op::RowSums(x) => {
                    let c = val(*x).cols();
                    let d = Matrix::from_fn(g.rows(), c, |i, _| g[(i, 0)]);
                    Self::acc(&mut grads, *x, d);
                }
                Op::SumAll(x) => {
                    let (r, c) = val(*x).shape();
                    Self::acc(&mut grads, *x, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::DiagExtract(x) => {
                    let n = val(*x).rows();
                    let mut d = Matrix::zeros(n, val(*x).cols());
                    for i in 0..g.rows() {
                        d[(i, i)] = g[(i, 0)];
                    }
                    Self::acc(&mut grads, *x, d);
                }
                Op::Reshape(x) => {
                    let (r, c) = val(*x).shape();
                    Self::acc(&mut grads, *x, g.reshape(r, c).expect("same count"));
                }
                Op::Gather(x, idx) => {
                    let (r, c) = val(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    let dd = d.data_mut();
                    for (k, &i) in idx.iter().enumerate() {
                        dd[i] += g.data()[k];
                    }
                    Self::acc(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let c = val(*p).cols();
                        let d = Matrix::from_fn(g.rows(), c, |i, j| g[(i, start + j)]);
                        start += c;
                        Self::acc(&mut grads, *p, d);
                    }
                }
                Op::RowBroadcast(x) => Self::acc(&mut grads, *x, g.col_sums()),
                Op::RowScaleConst(x, s) => {
                    let mut d = g.clone();
                    for (i, c) in s.iter().enumerate() {
                        d.row_mut(i).iter_mut().for_each(|e| *e *= c);
                    }
                    Self::acc(&mut grads, *x, d);
                }
                Op::SelectCol(x, j) => {
                    let (r, c) = val(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d[(i, *j)] = g[(i, 0)];
                    }
                    Self::acc(&mut grads, *x, d);
                }
                Op::NeighborMax { adj, x, arg } => {
                    let (a, m) = (val(*adj), val(*x));
                    let c = m.cols();
                    let mut da = Matrix::zeros(a.rows(), a.cols());
                    let mut dx = Matrix::zeros(m.rows(), c);
                    for i in 0..a.rows() {
                        for k in 0..c {
                            if let Some(j) = arg[i * c + k] {
                                dx[(j, k)] += a[(i, j)] * g[(i, k)];
                                da[(i, j)] += m[(j, k)] * g[(i, k)];
                            }
                        }
                    }
                    Self::acc(&mut grads, *adj, da);
                    Self::acc(&mut grads, *x, dx);
                }
                Op::IgnCombine {
                    fulls,
                    w1,
                    w2,
                    u,
                    w,
                    z,
                    s,
                    e,
                } => {
                    let n = g.rows();
                    let gt = g.transpose();
                    let cin = fulls.len();
                    let (r1, c1s) = val(*w1).shape();
                    let (r2, c2s) = val(*w2).shape();
                    let (mut d1, mut d2) = (Matrix::zeros(r1, c1s), Matrix::zeros(r2, c2s));
                    debug_assert_eq!(r1 * c1s, cin);
                    for (c, f) in fulls.iter().enumerate() {
                        let a = val(*f);
                        d1.data_mut()[c] = g.hadamard(a).sum();
                        d2.data_mut()[c] = gt.hadamard(a).sum();
                        let (c1, c2) = (val(*w1).data()[c], val(*w2).data()[c]);
                        let mut da = g.scale(c1);
                        da.axpy(c2, &gt);
                        Self::acc(&mut grads, *f, da);
                    }
                    Self::acc(&mut grads, *w1, d1);
                    Self::acc(&mut grads, *w2, d2);
                    Self::acc(&mut grads, *u, g.row_sums());
                    Self::acc(&mut grads, *w, gt.row_sums());
                    Self::acc(&mut grads, *z, Matrix::column(&g.diagonal()));
                    Self::acc(&mut grads, *s, Matrix::filled(1, 1, g.sum()));
                    Self::acc(&mut grads, *e, Matrix::filled(1, 1, g.trace()));
                    debug_assert_eq!(n, g.cols());
                }
                Op::SymCombine { a, alpha, u, s } => {
                    let al = val(*alpha)[(0, 0)];
                    Self::acc(&mut grads, *alpha, Matrix::filled(1, 1, g.hadamard(val(*a)).sum()));
                    Self::acc(&mut grads, *a, g.scale(al));
                    let du = g.row_sums().add(&g.col_sums().transpose());
                    Self::acc(&mut grads, *u, du);
                    Self::acc(&mut grads, *s, Matrix::filled(1, 1, g.sum()));
                }
                Op::SvdProject { x, svd } => match svd_project_backward(val(*x), svd, &g, SVD_GAP_MIN) {
                    Some(d) => Self::acc(&mut grads, *x, d),
                    None => self.degenerate_svd = true,
                },
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
    }

    /// Adds the gradient of every parameter node into `dest` at its offset.
    pub fn scatter_param_grads(&self, dest: &mut [f64]) {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param { offset }, Some(g)) = (&node.op, g) {
                for (d, v) in dest[*offset..*offset + g.data().len()].iter_mut().zip(g.data()) {
                    *d += v;
                }
            }
        }
    }
}
