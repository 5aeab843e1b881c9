use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::experiments::task::{Item, Task};
use crate::models::{reduce_grads, Example, GradReport, Model, ModelSpec, ParamStore, Tape};
use crate::tensor::{derive_seed, Matrix, RngStream};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adaptive moment estimation with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// `θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let b1t = 1.0 - BETA1.powi(self.t as i32);
        let b2t = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * (mh / (vh.sqrt() + EPS) + weight_decay * params[i]);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    /// Epochs without validation improvement before the rate is halved.
    #[serde(default = "d_patience")]
    pub patience: usize,
    /// Independent initializations; the one with the best validation loss wins.
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    /// Seed for initialization and batch order.
    #[serde(default)]
    pub seed: u64,
}

fn d_lr() -> f64 {
    1e-3
}
fn d_wd() -> f64 {
    0.1
}
fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    32
}
fn d_patience() -> usize {
    50
}
fn d_restarts() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: d_lr(),
            weight_decay: d_wd(),
            epochs: d_epochs(),
            batch_size: d_batch(),
            patience: d_patience(),
            restarts: d_restarts(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid("learning rate must be positive and weight decay nonnegative"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.restarts == 0 {
            return Err(invalid("batch size, patience and restarts must be at least 1"));
        }
        Ok(())
    }
}

/// Invariant point-cloud model `f` with the head `a‖W(f(V) − f(V'))‖² + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    pub base: Model,
    /// `head.w` (`t x t`), `head.a` and `head.b` (`1 x 1`).
    pub head: ParamStore,
}

impl PairModel {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        if !matches!(spec.family, crate::models::Family::Dsci(_) | crate::models::Family::SvdDs) {
            return Err(invalid("pair models need an invariant point-cloud family"));
        }
        let t = spec.out_dim;
        let base = Model::new(spec, seed)?;
        let mut head = ParamStore::new();
        let mut rng = RngStream::new(derive_seed(seed, 0x6865_6164));
        head.add_uniform("head.w", t, t, (1.0 / t as f64).sqrt(), &mut rng)?;
        head.add("head.a", 1, 1, vec![1.0])?;
        head.add("head.b", 1, 1, vec![0.0])?;
        Ok(Self { base, head })
    }

    fn trace(&self, tape: &mut Tape, a: &crate::consistent::SizedObject, b: &crate::consistent::SizedObject) -> Result<crate::models::Var> {
        let fa = self.base.trace(tape, a)?.pred;
        let fb = self.base.trace(tape, b)?.pred;
        let off = self.base.params.len();
        let e = |n: &str| self.head.entry(n).expect("head parameter").offset + off;
        let w = tape.param(self.head.matrix("head.w")?, e("head.w"));
        let sa = tape.param(self.head.matrix("head.a")?, e("head.a"));
        let sb = tape.param(self.head.matrix("head.b")?, e("head.b"));
        let d = tape.sub(fa, fb);
        let wd = tape.matmul_t(d, w);
        let sq = tape.hadamard(wd, wd);
        let s = tape.sum_all(sq);
        let s = tape.hadamard(s, sa);
        Ok(tape.add(s, sb))
    }

    pub fn predict(&self, a: &crate::consistent::SizedObject, b: &crate::consistent::SizedObject) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self.trace(&mut tape, a, b)?;
        Ok(tape.value(out).data()[0])
    }

    fn sample_grad(&self, a: &crate::consistent::SizedObject, b: &crate::consistent::SizedObject, target: f64) -> Result<Option<(f64, Vec<f64>)>> {
        let mut tape = Tape::new();
        let out = self.trace(&mut tape, a, b)?;
        let r = tape.value(out).data()[0] - target;
        tape.backward(out, Matrix::filled(1, 1, 2.0 * r));
        if tape.degenerate_svd {
            return Ok(None);
        }
        let mut g = vec![0.0; self.base.params.len() + self.head.len()];
        tape.scatter_param_grads(&mut g);
        Ok(Some((r * r, g)))
    }
}

/// A trainable model for one task kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Learner {
    Single(Model),
    Pair(PairModel),
}

impl Learner {
    pub fn new(spec: ModelSpec, task: &Task, seed: u64) -> Result<Self> {
        match task {
            Task::GwTlbPairs => Ok(Self::Pair(PairModel::new(spec, seed)?)),
            _ => Ok(Self::Single(Model::new(spec, seed)?)),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        match self {
            Self::Single(m) => &m.spec,
            Self::Pair(p) => &p.base.spec,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Single(m) => m.param_count(),
            Self::Pair(p) => p.base.param_count() + p.head.len(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Single(m) => m.params.values().to_vec(),
            Self::Pair(p) => [p.base.params.values(), p.head.values()].concat(),
        }
    }

    pub fn set_values(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(invalid("parameter vector has the wrong length"));
        }
        match self {
            Self::Single(m) => m.params.load_values(v),
            Self::Pair(p) => {
                let k = p.base.params.len();
                p.base.params.load_values(&v[..k])?;
                p.head.load_values(&v[k..])
            }
        }
    }

    fn singles<'a>(items: &[&'a Item]) -> Result<Vec<&'a Example>> {
        items
            .iter()
            .map(|it| match it {
                Item::Single(ex) => Ok(ex),
                Item::Pair { .. } => Err(invalid("single-input model got a pair item")),
            })
            .collect()
    }

    /// Batch-mean MSE and its gradient.
    pub fn grad(&self, items: &[&Item]) -> Result<GradReport> {
        match self {
            Self::Single(m) => m.grad_refs(&Self::singles(items)?),
            Self::Pair(p) => {
                let per: Vec<Result<Option<(f64, Vec<f64>)>>> = items
                    .par_iter()
                    .map(|it| match it {
                        Item::Pair { a, b, target } => p.sample_grad(a, b, *target),
                        Item::Single(_) => Err(invalid("pair model got a single item")),
                    })
                    .collect();
                reduce_grads(per, self.param_count())
            }
        }
    }

    /// Batch-mean MSE.
    pub fn loss(&self, items: &[&Item]) -> Result<f64> {
        match self {
            Self::Single(m) => m.loss_refs(&Self::singles(items)?),
            Self::Pair(p) => {
                let per: Vec<Result<f64>> = items
                    .par_iter()
                    .map(|it| match it {
                        Item::Pair { a, b, target } => Ok((p.predict(a, b)? - target).powi(2)),
                        Item::Single(_) => Err(invalid("pair model got a single item")),
                    })
                    .collect();
                let mut total = 0.0;
                for l in per {
                    total += l?;
                }
                Ok(total / items.len().max(1) as f64)
            }
        }
    }

    pub fn predict(&self, item: &Item) -> Result<Vec<f64>> {
        match (self, item) {
            (Self::Single(m), Item::Single(ex)) => Ok(m.predict(&ex.input)?.into_vec()),
            (Self::Pair(p), Item::Pair { a, b, .. }) => Ok(vec![p.predict(a, b)?]),
            _ => Err(invalid("item kind does not match the model")),
        }
    }
}

/// Train/validation/test index sets: a seeded permutation of `0..count`
/// cut at the given fractions.
pub fn split(count: usize, train: f64, val: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let perm = RngStream::new(derive_seed(seed, 0x7370_6c74)).permutation(count);
    let nt = ((count as f64) * train).round() as usize;
    let nv = (((count as f64) * val).round() as usize).min(count - nt.min(count));
    let nt = nt.min(count);
    (
        perm[..nt].to_vec(),
        perm[nt..nt + nv].to_vec(),
        perm[nt + nv..].to_vec(),
    )
}

/// Split fractions (train, validation) used for each task.
pub fn task_split(task: &Task) -> (f64, f64) {
    match task {
        Task::PopStats { .. } => (0.5, 0.25),
        Task::MaxDist => (0.8, 0.1),
        Task::TriangleDensity { .. } => (0.6, 0.2),
        Task::GwTlbPairs => (0.8, 0.2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's batches; epoch 0 is the loss before training.
    pub train: f64,
    pub val: f64,
    pub best_val: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    /// The model with its best-validation parameters.
    pub learner: Learner,
    pub curve: Vec<EpochStats>,
    pub best_val: f64,
    /// Which restart produced `learner`.
    pub best_restart: usize,
    /// Samples skipped for degenerate SVDs, summed over all steps.
    pub skipped: usize,
}

fn train_once(mut learner: Learner, train: &[&Item], val: &[&Item], cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    let mut params = learner.values();
    let mut opt = AdamW::new(params.len());
    let mut rng = RngStream::new(derive_seed(seed, 0x6261_7463));
    let select = |l: &Learner| if val.is_empty() { l.loss(train) } else { l.loss(val) };
    let init_train = learner.loss(train)?;
    let init_val = select(&learner)?;
    if !init_train.is_finite() || !init_val.is_finite() {
        return Err(Error::TrainDiverged { epoch: 0 });
    }
    let mut best = (init_val, params.clone());
    let mut lr = cfg.lr;
    let mut curve = vec![EpochStats {
        epoch: 0,
        train: init_train,
        val: init_val,
        best_val: init_val,
        lr,
    }];
    let mut since = 0;
    let mut skipped = 0;
    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(train.len());
        let (mut acc, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Item> = chunk.iter().map(|&i| train[i]).collect();
            let g = learner.grad(&batch)?;
            skipped += g.skipped;
            if g.used == 0 {
                continue;
            }
            if !g.loss.is_finite() || g.grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainDiverged { epoch });
            }
            acc += g.loss * g.used as f64;
            seen += g.used;
            opt.step(&mut params, &g.grad, lr, cfg.weight_decay);
            learner.set_values(&params)?;
        }
        let train_loss = if seen > 0 { acc / seen as f64 } else { f64::NAN };
        let val_loss = select(&learner)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::TrainDiverged { epoch });
        }
        if val_loss < best.0 {
            best = (val_loss, params.clone());
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                lr *= 0.5;
                since = 0;
            }
        }
        curve.push(EpochStats {
            epoch,
            train: train_loss,
            val: val_loss,
            best_val: best.0,
            lr,
        });
    }
    learner.set_values(&best.1)?;
    Ok(TrainResult {
        learner,
        curve,
        best_val: best.0,
        best_restart: 0,
        skipped,
    })
}

/// Trains `cfg.restarts` fresh initializations of `spec` on `train` and
/// returns the one with the lowest validation loss, at its best epoch.
pub fn train(spec: &ModelSpec, task: &Task, train: &[&Item], val: &[&Item], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut best: Option<TrainResult> = None;
    let mut skipped = 0;
    for r in 0..cfg.restarts {
        let seed = derive_seed(cfg.seed, r as u64);
        let learner = Learner::new(spec.clone(), task, seed)?;
        let mut res = train_once(learner, train, val, cfg, seed)?;
        skipped += res.skipped;
        res.best_restart = r;
        if best.as_ref().map_or(true, |b| res.best_val < b.best_val) {
            best = Some(res);
        }
    }
    let mut best = best.expect("at least one restart");
    best.skipped = skipped;
    Ok(best)
}
