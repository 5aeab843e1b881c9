use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistent::SizedObject;
use crate::error::{invalid, Result};
use crate::harness::{box_surface_point, sphere_point};
use crate::metrics::gw_tlb;
use crate::models::Example;
use crate::tensor::{cholesky, derive_seed, log_det_spd, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopSub {
    /// Entropy of the first marginal of `N(0, R(α) Σ R(α)ᵀ)` in `R²`.
    Rotation,
    /// MI between the halves of `N(0, [Σ, αΣ; αΣ, Σ])`.
    Correlation,
    /// MI between the halves of `N(0, I + λ v vᵀ)`.
    Rank1,
    /// MI between the halves of `N(0, Σ)` with a fresh random `Σ` per set.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphGen {
    /// Complete weighted graphs, `A_ij ~ U[0,1]` for `i ≤ j`, `x_i ~ U[0,1]`.
    DenseUniform,
    /// Simple graphs from an SBM with `K ~ U{10..20}` blocks.
    Sbm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    PopStats { sub: PopSub },
    MaxDist,
    TriangleDensity { gen: GraphGen },
    GwTlbPairs,
}

impl Task {
    pub fn name(&self) -> String {
        match self {
            Self::PopStats { sub } => format!("pop-stats-{}", kebab(sub)),
            Self::MaxDist => "max-dist".into(),
            Self::TriangleDensity { gen } => format!("triangle-density-{}", kebab(gen)),
            Self::GwTlbPairs => "gw-tlb-pairs".into(),
        }
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// A size-generalization task.
///
/// `samples` is the training dataset size `N`; for [`Task::GwTlbPairs`] it is
/// the number of shapes per class, giving `N²` cross-class pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: Task,
    pub samples: usize,
    pub n_train: usize,
    pub n_test: Vec<usize>,
    /// Number of fresh test inputs per evaluated size.
    #[serde(default = "default_eval")]
    pub eval_samples: usize,
    /// Ambient dimension of the population-statistics tasks other than rotation.
    #[serde(default = "default_pop_dim")]
    pub pop_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval() -> usize {
    1000
}

fn default_pop_dim() -> usize {
    32
}

impl TaskSpec {
    pub fn new(task: Task, samples: usize, n_train: usize, n_test: Vec<usize>, seed: u64) -> Self {
        Self {
            task,
            samples,
            n_train,
            n_test,
            eval_samples: default_eval(),
            pop_dim: default_pop_dim(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 10 {
            return Err(invalid("a task needs at least 10 samples"));
        }
        if self.n_train == 0 || self.n_test.is_empty() {
            return Err(invalid("n_train must be positive and n_test nonempty"));
        }
        if self.n_test.iter().any(|&n| n < self.n_train) {
            return Err(invalid("n_train must not exceed any test size"));
        }
        if self.eval_samples == 0 {
            return Err(invalid("eval_samples must be positive"));
        }
        if matches!(self.task, Task::PopStats { .. }) && (self.pop_dim < 2 || self.pop_dim % 2 != 0) {
            return Err(invalid("pop_dim must be even and at least 2"));
        }
        Ok(())
    }

    /// Input dimension of one element, node or point.
    pub fn in_dim(&self) -> usize {
        match self.task {
            Task::PopStats { sub: PopSub::Rotation } => 2,
            Task::PopStats { .. } => self.pop_dim,
            Task::MaxDist => 2,
            Task::TriangleDensity { .. } => 1,
            Task::GwTlbPairs => 3,
        }
    }

    fn task_rng(&self) -> RngStream {
        RngStream::new(derive_seed(self.seed, 0x7461_736B))
    }
}

/// One datum: a single input with its target, or a pair of point clouds with
/// a scalar target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Single(Example),
    Pair { a: SizedObject, b: SizedObject, target: f64 },
}

impl Item {
    pub fn target_values(&self) -> Vec<f64> {
        match self {
            Self::Single(ex) => ex.target.data().to_vec(),
            Self::Pair { target, .. } => vec![*target],
        }
    }
}

/// Which pool of inputs a dataset is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pool {
    Train,
    Eval,
}

/// Mutual information between the first `d1` coordinates and the rest of
/// `N(0, Σ)`: `½ (log det Σ₁₁ + log det Σ₂₂ − log det Σ)`.
pub fn gaussian_block_mi(sigma: &Matrix, d1: usize) -> Result<f64> {
    let d = sigma.rows();
    if d1 == 0 || d1 >= d {
        return Err(invalid("block split must leave both blocks nonempty"));
    }
    let first: Vec<usize> = (0..d1).collect();
    let second: Vec<usize> = (d1..d).collect();
    let s11 = crate::tensor::submatrix(sigma, &first);
    let s22 = crate::tensor::submatrix(sigma, &second);
    Ok(0.5 * (log_det_spd(&s11)? + log_det_spd(&s22)? - log_det_spd(sigma)?))
}

/// Differential entropy of `N(0, var)` on `R`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * var).ln()
}

fn random_spd(d: usize, rng: &mut RngStream) -> Matrix {
    let b = Matrix::from_vec(d, d, rng.gaussians(d * d)).expect("square");
    b.matmul_t(&b).scale(1.0 / d as f64).add(&Matrix::identity(d).scale(0.1))
}

fn gaussian_set(cov: &Matrix, n: usize, rng: &mut RngStream) -> Result<Matrix> {
    let l = cholesky(cov)?;
    let d = cov.rows();
    Ok(Matrix::from_vec(n, d, rng.gaussians(n * d))?.matmul_t(&l))
}

fn rotation(alpha: f64) -> Matrix {
    let (s, c) = alpha.sin_cos();
    Matrix::from_rows(&[vec![c, -s], vec![s, c]]).expect("2x2")
}

/// Parameters drawn once per task and shared by all its datasets.
struct PopShared {
    sigma: Matrix,
    v: Vec<f64>,
}

fn pop_shared(spec: &TaskSpec, sub: PopSub) -> PopShared {
    let mut rng = spec.task_rng();
    let d = spec.in_dim();
    let sigma = match sub {
        PopSub::Rotation => random_spd(2, &mut rng),
        PopSub::Correlation => random_spd(d / 2, &mut rng),
        _ => Matrix::identity(1),
    };
    let g = rng.gaussians(d);
    let norm = crate::tensor::norm2(&g);
    PopShared {
        sigma,
        v: g.into_iter().map(|x| x / norm).collect(),
    }
}

fn pop_example(spec: &TaskSpec, sub: PopSub, shared: &PopShared, n: usize, rng: &mut RngStream) -> Result<Example> {
    let d = spec.in_dim();
    let (cov, target) = match sub {
        PopSub::Rotation => {
            let r = rotation(rng.uniform_range(0.0, PI));
            let cov = r.matmul(&shared.sigma).matmul_t(&r);
            let var = cov.data()[0];
            (cov, gaussian_entropy(var))
        }
        PopSub::Correlation => {
            let alpha = rng.uniform_range(-1.0, 1.0);
            let h = d / 2;
            let s = &shared.sigma;
            let cov = Matrix::from_fn(d, d, |i, j| {
                let v = s.data()[(i % h) * h + j % h];
                if (i < h) == (j < h) {
                    v
                } else {
                    alpha * v
                }
            });
            let mi = gaussian_block_mi(&cov, h)?;
            (cov, mi)
        }
        PopSub::Rank1 => {
            let lambda = rng.uniform();
            let v = &shared.v;
            let cov = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } + lambda * v[i] * v[j]);
            let mi = gaussian_block_mi(&cov, d / 2)?;
            (cov, mi)
        }
        PopSub::Random => {
            let cov = random_spd(d, rng);
            let mi = gaussian_block_mi(&cov, d / 2)?;
            (cov, mi)
        }
    };
    Ok(Example {
        input: SizedObject::set(gaussian_set(&cov, n, rng)?)?,
        target: Matrix::filled(1, 1, target),
    })
}

fn maxdist_example(n: usize, rng: &mut RngStream) -> Result<Example> {
    let (cx, cy) = (rng.gaussian(), rng.gaussian());
    let r = rng.uniform();
    let mut x = Matrix::zeros(n, 2);
    for i in 0..n {
        let t = rng.uniform_range(0.0, 2.0 * PI);
        x.row_mut(i).copy_from_slice(&[cx + r * t.cos(), cy + r * t.sin()]);
    }
    let target = x.row_norms().into_iter().fold(0.0, f64::max);
    Ok(Example {
        input: SizedObject::set(x)?,
        target: Matrix::filled(1, 1, target),
    })
}

/// `y_i = (1/n²) Σ_{j,k} A_ij A_jk A_ki x_i x_j x_k`, as `(1/n²) diag(C³)` with
/// `C = A diag(x)`.
pub fn triangle_density(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || x.len() != n {
        return Err(invalid("triangle density needs a square adjacency and one value per node"));
    }
    let c = Matrix::from_fn(n, n, |i, j| a.data()[i * n + j] * x[j]);
    let c2 = c.matmul(&c);
    let scale = 1.0 / (n * n) as f64;
    Ok((0..n)
        .map(|i| scale * (0..n).map(|k| c2.data()[i * n + k] * c.data()[k * n + i]).sum::<f64>())
        .collect())
}

fn triangle_example(gen: GraphGen, n: usize, rng: &mut RngStream) -> Result<Example> {
    let mut a = Matrix::zeros(n, n);
    let x: Vec<f64> = match gen {
        GraphGen::DenseUniform => {
            for i in 0..n {
                for j in i..n {
                    let v = rng.uniform();
                    a.data_mut()[i * n + j] = v;
                    a.data_mut()[j * n + i] = v;
                }
            }
            rng.uniforms(n)
        }
        GraphGen::Sbm => {
            let k = 10 + rng.below(11);
            let mut p = vec![vec![0.0; k]; k];
            for r in 0..k {
                for s in r..k {
                    let v = rng.uniform();
                    p[r][s] = v;
                    p[s][r] = v;
                }
            }
            let gamma = rng.uniforms(k);
            let z: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.bernoulli(p[z[i]][z[j]]) {
                        a.data_mut()[i * n + j] = 1.0;
                        a.data_mut()[j * n + i] = 1.0;
                    }
                }
            }
            z.iter().map(|&b| gamma[b]).collect()
        }
    };
    let y = triangle_density(&a, &x)?;
    Ok(Example {
        input: SizedObject::graph(a, Matrix::column(&x))?,
        target: Matrix::column(&y),
    })
}

/// Half-widths of the box class before scaling.
pub const BOX_SHAPE: [f64; 3] = [1.0, 0.7, 0.4];

/// Samples `n` points of shape `index` in `class` (0 = sphere surface,
/// 1 = box surface), with a per-shape scale in `[0.5, 1.5]`.
pub fn shape_cloud(seed: u64, pool: Pool, class: usize, index: usize, n: usize) -> Result<SizedObject> {
    let pool_tag = match pool {
        Pool::Train => 0,
        Pool::Eval => 1,
    };
    let shape_seed = derive_seed(derive_seed(derive_seed(seed, 0x7368_6170), pool_tag), (class * 1_000_000 + index) as u64);
    let scale = RngStream::new(shape_seed).uniform_range(0.5, 1.5);
    let mut rng = RngStream::new(derive_seed(shape_seed, n as u64));
    let mut x = Matrix::zeros(n, 3);
    for i in 0..n {
        let p = if class == 0 {
            sphere_point(3, scale, &mut rng)
        } else {
            let h: Vec<f64> = BOX_SHAPE.iter().map(|v| v * scale).collect();
            box_surface_point(&h, &mut rng)
        };
        x.row_mut(i).copy_from_slice(&p);
    }
    SizedObject::cloud(x)
}

/// Exponent of the Gromov–Wasserstein lower bound used as target.
pub const TLB_P: f64 = 2.0;

fn stream(spec: &TaskSpec, pool: Pool, n: usize) -> u64 {
    let tag = match pool {
        Pool::Train => 1,
        Pool::Eval => 2,
    };
    derive_seed(derive_seed(spec.seed, tag), n as u64)
}

/// Generates `count` items of size `n` from `pool`. Deterministic in
/// `(spec, pool, n, count)`; item `i` depends only on its own stream, so the
/// first items do not change when `count` grows.
pub fn generate(spec: &TaskSpec, pool: Pool, n: usize, count: usize) -> Result<Vec<Item>> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("input size must be positive"));
    }
    let base = stream(spec, pool, n);
    match &spec.task {
        Task::GwTlbPairs => {
            let clouds: Vec<Result<(SizedObject, SizedObject)>> = (0..count)
                .into_par_iter()
                .map(|i| Ok((shape_cloud(spec.seed, pool, 0, i, n)?, shape_cloud(spec.seed, pool, 1, i, n)?)))
                .collect();
            let clouds: Vec<(SizedObject, SizedObject)> = clouds.into_iter().collect::<Result<_>>()?;
            let pairs: Vec<(usize, usize)> = (0..count).flat_map(|i| (0..count).map(move |j| (i, j))).collect();
            let items: Vec<Result<Item>> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let (a, b) = (&clouds[i].0, &clouds[j].1);
                    let (SizedObject::PointCloud(xa), SizedObject::PointCloud(xb)) = (a, b) else {
                        unreachable!()
                    };
                    Ok(Item::Pair {
                        a: a.clone(),
                        b: b.clone(),
                        target: gw_tlb(xa, xb, TLB_P)?,
                    })
                })
                .collect();
            items.into_iter().collect()
        }
        task => {
            let shared = match task {
                Task::PopStats { sub } => Some(pop_shared(spec, *sub)),
                _ => None,
            };
            let items: Vec<Result<Item>> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(derive_seed(base, i as u64));
                    let ex = match task {
                        Task::PopStats { sub } => pop_example(spec, *sub, shared.as_ref().unwrap(), n, &mut rng)?,
                        Task::MaxDist => maxdist_example(n, &mut rng)?,
                        Task::TriangleDensity { gen } => triangle_example(*gen, n, &mut rng)?,
                        Task::GwTlbPairs => unreachable!(),
                    };
                    Ok(Item::Single(ex))
                })
                .collect();
            items.into_iter().collect()
        }
    }
}

/// The training dataset: `spec.samples` items (shapes per class for pairs) at `n`.
pub fn gen_task(spec: &TaskSpec, n: usize) -> Result<Vec<Item>> {
    generate(spec, Pool::Train, n, spec.samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank1_with_zero_lambda_has_zero_mi() {
        let d = 32;
        let cov = Matrix::identity(d);
        assert!(gaussian_block_mi(&cov, 16).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_mi_closed_form() {
        // For a 2x2 correlation matrix, MI = -½ log(1 - ρ²).
        let rho: f64 = 0.6;
        let cov = Matrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
        let mi = gaussian_block_mi(&cov, 1).unwrap();
        assert!((mi + 0.5 * (1.0 - rho * rho).ln()).abs() < 1e-12);
    }

    #[test]
    fn triangle_density_all_ones() {
        for n in [1, 3, 8] {
            let y = triangle_density(&Matrix::ones(n, n), &vec![1.0; n]).unwrap();
            assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn triangle_density_matches_triple_sum() {
        let mut rng = RngStream::new(4);
        let n = 6;
        let a = Matrix::from_fn(n, n, |_, _| 0.0);
        let mut a = a;
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform();
                a.data_mut()[i * n + j] = v;
                a.data_mut()[j * n + i] = v;
            }
        }
        let x = rng.uniforms(n);
        let y = triangle_density(&a, &x).unwrap();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += a[(i, j)] * a[(j, k)] * a[(k, i)] * x[i] * x[j] * x[k];
                }
            }
            assert!((y[i] - s / (n * n) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_reproducible_and_prefix_stable() {
        let spec = TaskSpec::new(Task::MaxDist, 20, 5, vec![5, 10], 3);
        let a = generate(&spec, Pool::Train, 5, 20).unwrap();
        let b = generate(&spec, Pool::Train, 5, 20).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec, Pool::Train, 5, 10).unwrap();
        assert_eq!(&a[..10], &c[..]);
        let e = generate(&spec, Pool::Eval, 5, 10).unwrap();
        assert_ne!(&a[..10], &e[..]);
    }

    #[test]
    fn maxdist_target_is_max_row_norm() {
        let spec = TaskSpec::new(Task::MaxDist, 10, 7, vec![7], 1);
        for item in gen_task(&spec, 7).unwrap() {
            let Item::Single(ex) = item else { panic!() };
            let SizedObject::Set(x) = &ex.input else { panic!() };
            let m = x.row_norms().into_iter().fold(0.0, f64::max);
            assert_eq!(ex.target.data()[0], m);
        }
    }

    #[test]
    fn task_spec_validation() {
        assert!(TaskSpec::new(Task::MaxDist, 9, 5, vec![5], 0).validate().is_err());
        assert!(TaskSpec::new(Task::MaxDist, 10, 5, vec![4], 0).validate().is_err());
        let json = r#"{"task": {"kind": "triangle-density", "gen": "sbm"}, "samples": 10, "n_train": 5, "n_test": [5, 10]}"#;
        let spec: TaskSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.eval_samples, 1000);
        assert!(serde_json::from_str::<TaskSpec>(&json.replace("\"samples\"", "\"sample\"")).is_err());
    }

    #[test]
    fn sbm_graphs_are_simple() {
        let spec = TaskSpec::new(Task::TriangleDensity { gen: GraphGen::Sbm }, 10, 12, vec![12], 2);
        for item in gen_task(&spec, 12).unwrap() {
            let Item::Single(ex) = item else { panic!() };
            let SizedObject::GraphSignal { adj, .. } = &ex.input else { panic!() };
            assert!(adj.diagonal().iter().all(|v| *v == 0.0));
            assert!(adj.data().iter().all(|v| *v == 0.0 || *v == 1.0));
        }
    }

    #[test]
    fn gw_pairs_are_cross_class() {
        let spec = TaskSpec::new(Task::GwTlbPairs, 10, 8, vec![8], 5);
        let items = generate(&spec, Pool::Train, 8, 3).unwrap();
        assert_eq!(items.len(), 9);
        for item in items {
            let Item::Pair { a, target, .. } = item else { panic!() };
            let SizedObject::PointCloud(x) = a else { panic!() };
            // Class 0 lies on a sphere centred at the origin.
            let r = x.row_norms();
            assert!(r.iter().all(|v| (v - r[0]).abs() < 1e-12));
            assert!(target > 0.0);
        }
    }
}
