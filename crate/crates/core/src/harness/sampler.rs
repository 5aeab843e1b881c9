use serde::{Deserialize, Serialize};

use crate::consistent::{random_orthogonal, SizedObject};
use crate::error::{invalid, Result};
use crate::tensor::{cholesky, derive_seed, Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarDist {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl ScalarDist {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { mean, std } if mean.is_finite() && std.is_finite() && std > 0.0 => Ok(()),
            Self::Uniform { low, high } if low.is_finite() && high.is_finite() && low < high => Ok(()),
            _ => Err(invalid(format!("bad scalar distribution {self:?}"))),
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Self::Gaussian { mean, std } => mean + std * rng.gaussian(),
            Self::Uniform { low, high } => rng.uniform_range(low, high),
        }
    }
}

/// A function on `[0, 1]`, used as a node signal or a 1D signal limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalFn {
    Constant { value: f64 },
    /// `a + b t`
    Affine { a: f64, b: f64 },
    /// `amplitude · sin(2π frequency t)`
    Sine { amplitude: f64, frequency: f64 },
    /// Piecewise linear through `values` at equispaced nodes `0, 1/(m-1), …, 1`.
    Table { values: Vec<f64> },
}

impl Default for SignalFn {
    fn default() -> Self {
        Self::Constant { value: 1.0 }
    }
}

impl SignalFn {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { value } => value.is_finite(),
            Self::Affine { a, b } => a.is_finite() && b.is_finite(),
            Self::Sine { amplitude, frequency } => amplitude.is_finite() && frequency.is_finite() && *frequency != 0.0,
            Self::Table { values } => values.len() >= 2 && values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("bad signal function {self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Affine { a, b } => a + b * t,
            Self::Sine { amplitude, frequency } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            Self::Table { values } => {
                let m = values.len() - 1;
                let s = t.clamp(0.0, 1.0) * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let w = s - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// Exact mean of the function over `[t0, t1]`, `t0 < t1`.
    pub fn cell_mean(&self, t0: f64, t1: f64) -> f64 {
        let len = t1 - t0;
        match self {
            Self::Constant { value } => *value,
            Self::Affine { a, b } => a + b * 0.5 * (t0 + t1),
            Self::Sine { amplitude, frequency } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                amplitude * ((w * t0).cos() - (w * t1).cos()) / (w * len)
            }
            Self::Table { values } => {
                // Trapezoids are exact on each linear piece.
                let m = values.len() - 1;
                let mut knots = vec![t0];
                for k in 1..m {
                    let x = k as f64 / m as f64;
                    if x > t0 && x < t1 {
                        knots.push(x);
                    }
                }
                knots.push(t1);
                let area: f64 = knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
                    .sum();
                area / len
            }
        }
    }
}

/// A graphon `W: [0,1]² → [0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Graphon {
    Constant { value: f64 },
    /// Stochastic block model: block `a` occupies a `fractions[a]` share of
    /// `[0,1]` (in order) and blocks connect with probability `probs[a][b]`.
    Sbm { probs: Vec<Vec<f64>>, fractions: Vec<f64> },
    /// `W(x, y) = x y`
    Product,
}

impl Graphon {
    fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } if (0.0..=1.0).contains(value) => Ok(()),
            Self::Constant { .. } => Err(invalid("constant graphon value must lie in [0, 1]")),
            Self::Sbm { probs, fractions } => {
                let k = fractions.len();
                if k == 0 || probs.len() != k || probs.iter().any(|r| r.len() != k) {
                    return Err(invalid("SBM needs a K x K probability matrix and K block fractions"));
                }
                if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("SBM block fractions must be positive and sum to 1"));
                }
                for a in 0..k {
                    for b in 0..k {
                        if !(0.0..=1.0).contains(&probs[a][b]) || probs[a][b] != probs[b][a] {
                            return Err(invalid("SBM probabilities must be symmetric and lie in [0, 1]"));
                        }
                    }
                }
                Ok(())
            }
            Self::Product => Ok(()),
        }
    }

    fn block_edges(fractions: &[f64]) -> Vec<f64> {
        let mut edges = vec![0.0];
        let mut acc = 0.0;
        for f in fractions {
            acc += f;
            edges.push(acc);
        }
        *edges.last_mut().unwrap() = 1.0;
        edges
    }

    fn block_of(edges: &[f64], x: f64) -> usize {
        let k = edges.len() - 1;
        (0..k).find(|&a| x < edges[a + 1]).unwrap_or(k - 1)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sbm { probs, fractions } => {
                let e = Self::block_edges(fractions);
                probs[Self::block_of(&e, x)][Self::block_of(&e, y)]
            }
            Self::Product => x * y,
        }
    }

    /// Exact mean of `W` over `[s0,s1] x [t0,t1]`.
    pub fn cell_mean(&self, s0: f64, s1: f64, t0: f64, t1: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Product => 0.25 * (s0 + s1) * (t0 + t1),
            Self::Sbm { probs, fractions } => {
                let e = Self::block_edges(fractions);
                let overlap = |lo: f64, hi: f64, a: usize| (hi.min(e[a + 1]) - lo.max(e[a])).max(0.0);
                let k = fractions.len();
                let mut acc = 0.0;
                for a in 0..k {
                    let oa = overlap(s0, s1, a);
                    if oa == 0.0 {
                        continue;
                    }
                    for b in 0..k {
                        acc += oa * overlap(t0, t1, b) * probs[a][b];
                    }
                }
                acc / ((s1 - s0) * (t1 - t0))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CloudShape {
    /// Isotropic Gaussian with per-axis standard deviation `std`.
    Gaussian { std: f64 },
    /// Uniform on the sphere surface of the given radius.
    Sphere { radius: f64 },
    /// Uniform on the surface of the axis-aligned box `[-h, h]`.
    Box { half_widths: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudComponent {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub shape: CloudShape,
}

fn one() -> f64 {
    1.0
}

/// Draws a uniform point on the surface of `[-h, h]`; faces are chosen
/// proportionally to their area.
pub fn box_surface_point(h: &[f64], rng: &mut RngStream) -> Vec<f64> {
    let k = h.len();
    if k == 1 {
        return vec![if rng.bernoulli(0.5) { h[0] } else { -h[0] }];
    }
    let areas: Vec<f64> = (0..k)
        .map(|a| (0..k).filter(|&b| b != a).map(|b| 2.0 * h[b]).product::<f64>())
        .collect();
    let total: f64 = areas.iter().sum();
    let mut r = rng.uniform() * total;
    let mut axis = k - 1;
    for (a, w) in areas.iter().enumerate() {
        if r < *w {
            axis = a;
            break;
        }
        r -= w;
    }
    (0..k)
        .map(|b| {
            if b == axis {
                if rng.bernoulli(0.5) {
                    h[b]
                } else {
                    -h[b]
                }
            } else {
                rng.uniform_range(-h[b], h[b])
            }
        })
        .collect()
}

/// Draws a uniform point on the sphere of radius `r` in `R^k`.
pub fn sphere_point(k: usize, r: f64, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let g = rng.gaussians(k);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|v| r * v / norm).collect();
        }
    }
}

/// Limit objects that finite inputs are sampled from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Limit {
    /// A distribution on `R`; samples are `n x 1` sets.
    Scalar { dist: ScalarDist },
    /// `N(mean, cov)` on `R^d`; `mean` defaults to 0 and `cov` to the identity.
    GaussianVec {
        d: usize,
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default)]
        cov: Option<Vec<Vec<f64>>>,
    },
    /// A function on `[0, 1]`; samples are `n x 1` sets.
    Signal { f: SignalFn },
    /// A graphon with a node signal `X_i = f(u_i)`.
    Graphon {
        w: Graphon,
        #[serde(default)]
        signal: SignalFn,
    },
    /// A mixture of shapes in `R^k`; optionally rotated by a fresh random
    /// orthogonal matrix per sample.
    Cloud {
        k: usize,
        components: Vec<CloudComponent>,
        #[serde(default)]
        random_rotation: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Rows i.i.d. from the limit distribution (or `f(u_i)`, `u_i ~ U[0,1]`).
    IidEmpirical,
    /// `u_i ~ U[0,1]`, `A_ij ~ Ber(W(u_i, u_j))` for `i < j`, zero diagonal.
    GraphonBernoulli,
    /// Values at `(i-1)/n`.
    UniformGrid,
    /// Exact means over the cells `[(i-1)/n, i/n]`.
    LocalAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub limit: Limit,
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(limit: Limit, scheme: Scheme, seed: u64) -> Self {
        Self { limit, scheme, seed }
    }

    pub fn validate(&self) -> Result<()> {
        use Scheme::*;
        let admissible = matches!(
            (&self.limit, self.scheme),
            (Limit::Scalar { .. } | Limit::GaussianVec { .. } | Limit::Cloud { .. }, IidEmpirical)
                | (Limit::Signal { .. }, IidEmpirical | UniformGrid | LocalAverage)
                | (Limit::Graphon { .. }, GraphonBernoulli | UniformGrid | LocalAverage)
        );
        if !admissible {
            return Err(invalid(format!(
                "scheme {:?} is not admissible for this limit",
                self.scheme
            )));
        }
        match &self.limit {
            Limit::Scalar { dist } => dist.validate(),
            Limit::GaussianVec { d, mean, cov } => {
                if *d == 0 {
                    return Err(invalid("gaussian-vec needs d >= 1"));
                }
                if mean.as_ref().is_some_and(|m| m.len() != *d) {
                    return Err(invalid("mean length must equal d"));
                }
                if let Some(c) = cov {
                    let m = Matrix::from_rows(c)?;
                    if m.shape() != (*d, *d) || !m.is_symmetric(1e-12) {
                        return Err(invalid("cov must be a symmetric d x d matrix"));
                    }
                    cholesky(&m)?;
                }
                Ok(())
            }
            Limit::Signal { f } => f.validate(),
            Limit::Graphon { w, signal } => {
                w.validate()?;
                signal.validate()
            }
            Limit::Cloud { k, components, .. } => {
                if *k == 0 || components.is_empty() {
                    return Err(invalid("cloud needs k >= 1 and at least one component"));
                }
                for c in components {
                    if !(c.weight > 0.0) || c.center.as_ref().is_some_and(|m| m.len() != *k) {
                        return Err(invalid("cloud components need positive weight and a length-k center"));
                    }
                    let ok = match &c.shape {
                        CloudShape::Gaussian { std } => *std > 0.0,
                        CloudShape::Sphere { radius } => *radius > 0.0,
                        CloudShape::Box { half_widths } => {
                            half_widths.len() == *k && half_widths.iter().all(|h| *h > 0.0)
                        }
                    };
                    if !ok {
                        return Err(invalid(format!("bad cloud shape {:?}", c.shape)));
                    }
                }
                Ok(())
            }
        }
    }

    /// The stream used for size `n` and trial `trial`.
    pub fn stream(&self, n: usize, trial: usize) -> RngStream {
        RngStream::new(derive_seed(derive_seed(self.seed, n as u64), trial as u64))
    }
}

fn cell(i: usize, n: usize) -> (f64, f64) {
    (i as f64 / n as f64, (i + 1) as f64 / n as f64)
}

/// Draws a size-`n` input. The result depends only on `(spec, n, trial)`.
pub fn sample(spec: &SamplerSpec, n: usize, trial: usize) -> Result<SizedObject> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let mut rng = spec.stream(n, trial);
    match (&spec.limit, spec.scheme) {
        (Limit::Scalar { dist }, _) => {
            let v: Vec<f64> = (0..n).map(|_| dist.draw(&mut rng)).collect();
            SizedObject::set(Matrix::column(&v))
        }
        (Limit::GaussianVec { d, mean, cov }, _) => {
            let l = match cov {
                Some(c) => cholesky(&Matrix::from_rows(c)?)?,
                None => Matrix::identity(*d),
            };
            let z = Matrix::from_vec(n, *d, rng.gaussians(n * d))?;
            let mut x = z.matmul_t(&l);
            if let Some(m) = mean {
                for i in 0..n {
                    x.row_mut(i).iter_mut().zip(m).for_each(|(a, b)| *a += b);
                }
            }
            SizedObject::set(x)
        }
        (Limit::Signal { f }, scheme) => {
            let v: Vec<f64> = match scheme {
                Scheme::IidEmpirical => (0..n).map(|_| f.eval(rng.uniform())).collect(),
                Scheme::UniformGrid => (0..n).map(|i| f.eval(cell(i, n).0)).collect(),
                _ => (0..n)
                    .map(|i| {
                        let (a, b) = cell(i, n);
                        f.cell_mean(a, b)
                    })
                    .collect(),
            };
            SizedObject::set(Matrix::column(&v))
        }
        (Limit::Graphon { w, signal }, Scheme::GraphonBernoulli) => {
            let u = rng.uniforms(n);
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.bernoulli(w.eval(u[i], u[j])) {
                        a.data_mut()[i * n + j] = 1.0;
                        a.data_mut()[j * n + i] = 1.0;
                    }
                }
            }
            let x: Vec<f64> = u.iter().map(|&t| signal.eval(t)).collect();
            SizedObject::graph(a, Matrix::column(&x))
        }
        (Limit::Graphon { w, signal }, scheme) => {
            let grid = scheme == Scheme::UniformGrid;
            let a = Matrix::from_fn(n, n, |i, j| {
                let ((s0, s1), (t0, t1)) = (cell(i, n), cell(j, n));
                if grid {
                    w.eval(s0, t0)
                } else {
                    w.cell_mean(s0, s1, t0, t1)
                }
            });
            // Symmetrize exactly; the closed forms can differ in the last bit.
            let a = Matrix::from_fn(n, n, |i, j| if i <= j { a.data()[i * n + j] } else { a.data()[j * n + i] });
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let (t0, t1) = cell(i, n);
                    if grid {
                        signal.eval(t0)
                    } else {
                        signal.cell_mean(t0, t1)
                    }
                })
                .collect();
            SizedObject::graph(a, Matrix::column(&x))
        }
        (
            Limit::Cloud {
                k,
                components,
                random_rotation,
            },
            _,
        ) => {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            let mut x = Matrix::zeros(n, *k);
            for i in 0..n {
                let mut r = rng.uniform() * total;
                let mut comp = &components[components.len() - 1];
                for c in components {
                    if r < c.weight {
                        comp = c;
                        break;
                    }
                    r -= c.weight;
                }
                let mut p = match &comp.shape {
                    CloudShape::Gaussian { std } => rng.gaussians(*k).into_iter().map(|v| v * std).collect(),
                    CloudShape::Sphere { radius } => sphere_point(*k, *radius, &mut rng),
                    CloudShape::Box { half_widths } => box_surface_point(half_widths, &mut rng),
                };
                if let Some(c) = &comp.center {
                    p.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                }
                x.row_mut(i).copy_from_slice(&p);
            }
            if *random_rotation {
                let g = random_orthogonal(*k, &mut rng);
                x = x.matmul(&g);
            }
            SizedObject::cloud(x)
        }
    }
}

/// `m` nodes whose uniform measure approximates the limit distribution:
/// quantiles `F⁻¹((i - 1/2)/m)` for scalar laws, midpoints `f((i - 1/2)/m)`
/// for signals.
pub fn quadrature_nodes(limit: &Limit, m: usize) -> Result<Matrix> {
    use statrs::distribution::{ContinuousCDF, Normal};
    if m == 0 {
        return Err(invalid("quadrature needs at least one node"));
    }
    let mid = |i: usize| (i as f64 + 0.5) / m as f64;
    let v: Vec<f64> = match limit {
        Limit::Scalar {
            dist: ScalarDist::Gaussian { mean, std },
        } => {
            let normal = Normal::new(*mean, *std).map_err(|e| invalid(e.to_string()))?;
            (0..m).map(|i| normal.inverse_cdf(mid(i))).collect()
        }
        Limit::Scalar {
            dist: ScalarDist::Uniform { low, high },
        } => (0..m).map(|i| low + (high - low) * mid(i)).collect(),
        Limit::Signal { f } => (0..m).map(|i| f.eval(mid(i))).collect(),
        _ => return Err(invalid("quadrature nodes are only defined for scalar and signal limits")),
    };
    Ok(Matrix::column(&v))
}

/// `‖f - f_X‖_p` on `[0,1]` for the step function of `x` (cell `i` holds
/// `x[i]`), integrated with `sub` midpoint nodes per cell.
pub fn step_error(f: &SignalFn, x: &[f64], p: f64, sub: usize) -> f64 {
    let n = x.len();
    let sub = sub.max(1);
    let h = 1.0 / (n * sub) as f64;
    let mut acc = 0.0_f64;
    for (i, xi) in x.iter().enumerate() {
        for s in 0..sub {
            let t = (i * sub + s) as f64 * h + 0.5 * h;
            let d = (f.eval(t) - xi).abs();
            if p.is_infinite() {
                acc = acc.max(d);
            } else {
                acc += d.powf(p) * h;
            }
        }
    }
    if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}
