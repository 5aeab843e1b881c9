use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiments::task::{generate, Item, Pool, TaskSpec};
use crate::experiments::train::{split, task_split, train, EpochStats, Learner, TrainConfig};
use crate::harness::median;
use crate::models::{Family, Model, ModelSpec};
use crate::tensor::derive_seed;

/// Fresh test sets from the evaluation pool, one per size.
pub type EvalSets = Vec<(usize, Vec<Item>)>;

/// Test sets at `n_train` followed by every size in `n_test` (deduplicated).
pub fn eval_sets(spec: &TaskSpec) -> Result<EvalSets> {
    let mut sizes = vec![spec.n_train];
    sizes.extend(spec.n_test.iter().copied().filter(|&n| n != spec.n_train));
    sizes
        .into_iter()
        .map(|n| Ok((n, generate(spec, Pool::Eval, n, spec.eval_samples)?)))
        .collect()
}

/// Test MSE per size.
pub fn evaluate_sizes(learner: &Learner, sets: &EvalSets) -> Result<Vec<(usize, f64)>> {
    sets.iter()
        .map(|(n, items)| {
            let refs: Vec<&Item> = items.iter().collect();
            Ok((*n, learner.loss(&refs)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeGenRow {
    pub task: String,
    pub model: String,
    pub n: usize,
    pub run: usize,
    pub mse: f64,
    /// `mse / mse(n_train)` for the same run.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SizeGenRun {
    /// One row per (run, test size), in that order.
    pub rows: Vec<SizeGenRow>,
    pub curves: Vec<Vec<EpochStats>>,
    pub learners: Vec<Learner>,
    pub param_count: usize,
}

impl SizeGenRun {
    /// Median over runs of the MSE ratio at size `n`.
    pub fn median_ratio(&self, n: usize) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().filter(|r| r.n == n).map(|r| r.ratio).collect();
        (!r.is_empty()).then(|| median(&r))
    }
}

pub fn family_name(f: Family) -> String {
    serde_json::to_value(f)
        .ok()
        .and_then(|v| match v {
            serde_json::Value::String(s) => Some(s),
            serde_json::Value::Object(m) => m.into_iter().next().map(|(k, v)| format!("{k}-{}", v.as_str().unwrap_or(""))),
            _ => None,
        })
        .unwrap_or_default()
}

/// Trains `runs` models on `dataset` (each with its own split and seed) and
/// evaluates every one of them on the shared test sets.
pub fn run_sizegen(
    task: &TaskSpec,
    model: &ModelSpec,
    cfg: &TrainConfig,
    runs: usize,
    dataset: &[Item],
    sets: &EvalSets,
) -> Result<SizeGenRun> {
    task.validate()?;
    if runs == 0 {
        return Err(invalid("need at least one run"));
    }
    let (ft, fv) = task_split(&task.task);
    let results: Vec<Result<(Vec<(usize, f64)>, Vec<EpochStats>, Learner)>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let (tr, va, _) = split(dataset.len(), ft, fv, seed);
            let tr: Vec<&Item> = tr.iter().map(|&i| &dataset[i]).collect();
            let va: Vec<&Item> = va.iter().map(|&i| &dataset[i]).collect();
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let res = train(model, &task.task, &tr, &va, &run_cfg)?;
            let mses = evaluate_sizes(&res.learner, sets)?;
            Ok((mses, res.curve, res.learner))
        })
        .collect();
    let name = family_name(model.family);
    let mut out = SizeGenRun {
        rows: Vec::new(),
        curves: Vec::new(),
        learners: Vec::new(),
        param_count: 0,
    };
    for (r, res) in results.into_iter().enumerate() {
        let (mses, curve, learner) = res?;
        let base = mses.iter().find(|(n, _)| *n == task.n_train).map(|x| x.1).unwrap_or(f64::NAN);
        for &n in &task.n_test {
            let mse = mses.iter().find(|(m, _)| *m == n).map(|x| x.1).unwrap_or(f64::NAN);
            out.rows.push(SizeGenRow {
                task: task.task.name(),
                model: name.clone(),
                n,
                run: r,
                mse,
                ratio: mse / base,
            });
        }
        out.param_count = learner.param_count();
        out.curves.push(curve);
        out.learners.push(learner);
    }
    Ok(out)
}

/// `base` with the hidden width whose parameter count is closest to
/// `target`; fails if that count is off by more than 20%.
pub fn budget_spec(base: &ModelSpec, target: usize) -> Result<ModelSpec> {
    let mut best: Option<(usize, ModelSpec)> = None;
    for h in 1..=256 {
        let spec = base.clone().hidden(h);
        let count = Model::new(spec.clone(), 0)?.param_count();
        let gap = count.abs_diff(target);
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, spec));
        }
        if count > 2 * target {
            break;
        }
    }
    let (gap, spec) = best.expect("at least one width");
    if gap as f64 > 0.2 * target as f64 {
        return Err(invalid(format!("no width reaches {target} parameters within 20%")));
    }
    Ok(spec)
}
