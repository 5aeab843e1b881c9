//! The `dimlift` command-line front end.
//!
//! Exit codes: 0 success, 1 failed check / rate fit / training, 2 config or
//! parse error, 3 size cap exceeded.

mod config;
mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::consistent::{CheckReport, SequenceKind};
use crate::error::{Error, Result};
use crate::experiments::{
    budget_spec, eval_sets, gen_task, load_or_generate, run_sizegen, EvalSets, Learner, Pool, TrainConfig,
};
pub use crate::experiments::write_atomic;
use crate::harness::{mean_field_reference, run_transfer, Reference};
use crate::metrics::{
    cut_bounds, graph_op2, gw_tlb, hausdorff, sym_dist_cloud, wasserstein_1d, wasserstein_assign, EmpiricalMeasure,
    DEFAULT_RESTARTS,
};
use crate::models::audit::{find_witness, random_compat_check, Witness};
use crate::models::{Family, Model, ModelSpec, ParamStore};
use crate::tensor::Matrix;

pub use config::{CompatConfig, RunConfig, SizegenConfig, TransferConfig};
pub use io::{csv, fmt_f64, format_matrix, parse_matrix, read_matrix, CSV_HEADER};

#[derive(Parser, Debug)]
#[command(name = "dimlift", version, about = "Dimension-transferable models and size-generalization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `dimlift-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Randomized compatibility audit of a model under a consistent sequence.
    Compat {
        #[command(flatten)]
        common: Common,
        /// Model family, e.g. norm-deepset; overrides the config's model.
        #[arg(long)]
        model: Option<String>,
        /// Sequence kind, e.g. dup-set; defaults to the family's own.
        #[arg(long)]
        seq: Option<String>,
        /// Input feature width when --model is given.
        #[arg(long, default_value_t = 1)]
        in_dim: usize,
    },
    /// Runs a model on samples of growing size and fits the convergence rate.
    Transfer {
        #[command(flatten)]
        common: Common,
    },
    /// Trains on small inputs and reports test error on larger ones.
    Sizegen {
        #[command(flatten)]
        common: Common,
    },
    /// Distance between two inputs in the matrix text format.
    Metric {
        kind: MetricKind,
        a: PathBuf,
        /// Omitted for graph metrics to take the norm of `a` itself.
        b: Option<PathBuf>,
        /// Wasserstein / TLB exponent.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    /// 1D Wasserstein between the entries of two files.
    W1d,
    /// Wasserstein between uniform measures on the rows.
    Wp,
    /// Cut norm of `A − B` (zero signal): `lower upper [exact]`.
    Cut,
    /// Graph operator 2-norm of `A − B`.
    Op2,
    Hausdorff,
    /// Gromov–Wasserstein third lower bound.
    GwTlb,
    /// Orthogonally symmetrized Wasserstein distance (heuristic).
    SymDist,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Fit(_) | Error::TrainDiverged { .. } | Error::Io(_) => 1,
        Error::SizeCapExceeded { .. } => 3,
        Error::InvalidInput(_) | Error::Embed(_) | Error::Norm(_) | Error::Config { .. } | Error::Parse(_) => 2,
    }
}

/// Caps the global thread pool at `DIMLIFT_THREADS` when set.
pub fn init_threads() {
    if let Some(k) = std::env::var("DIMLIFT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if k > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Compat {
            common,
            model,
            seq,
            in_dim,
        } => {
            let mut cfg = load(&common)?;
            if let Some(m) = model {
                cfg.model = Some(ModelSpec::new(parse_enum::<Family>("model", &m)?, in_dim));
            }
            if let Some(s) = seq {
                cfg.seq = Some(parse_enum::<SequenceKind>("seq", &s)?);
            }
            cmd_compat(&cfg)
        }
        Command::Transfer { common } => cmd_transfer(&load(&common)?),
        Command::Sizegen { common } => cmd_sizegen(&load(&common)?),
        Command::Metric {
            kind,
            a,
            b,
            p,
            restarts,
            seed,
        } => {
            println!("{}", cmd_metric(kind, &a, b.as_deref(), p, restarts, seed)?);
            Ok(0)
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(path: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| Error::Config {
        path: path.into(),
        message: e.to_string(),
    })
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("dimlift-out"))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn build_model(cfg: &RunConfig) -> Result<Model> {
    let spec = cfg.require(&cfg.model, "model")?.clone();
    match &cfg.params {
        Some(p) => Model::with_params(spec, ParamStore::load(p)?),
        None => Model::new(spec, cfg.seed),
    }
}

#[derive(Serialize)]
struct CompatReport<'a> {
    model: &'a ModelSpec,
    seq: SequenceKind,
    seed: u64,
    sizes: &'a [usize],
    multiples: &'a [usize],
    trials: usize,
    pass: bool,
    check: CheckReport,
    witness: Option<Witness>,
}

/// Writes `compat.json`; exit 0 iff every deviation is within tolerance.
pub fn cmd_compat(cfg: &RunConfig) -> Result<i32> {
    let model = build_model(cfg)?;
    let seq = cfg.seq.unwrap_or_else(|| model.natural_sequence());
    let cc = cfg.compat.clone().unwrap_or_default();
    let check = random_compat_check(&model, seq, &cc.sizes, &cc.multiples, cc.trials, cfg.seed)?;
    let witness = find_witness(&model, seq, cfg.seed)?;
    let pass = check.pass && witness.as_ref().map_or(true, |w| w.deviation <= crate::consistent::COMPAT_TOL);
    let report = CompatReport {
        model: &model.spec,
        seq,
        seed: cfg.seed,
        sizes: &cc.sizes,
        multiples: &cc.multiples,
        trials: cc.trials,
        pass,
        check,
        witness,
    };
    write_json(&out_dir(cfg).join("compat.json"), &report)?;
    println!(
        "{} max_relative={}",
        if pass { "PASS" } else { "FAIL" },
        fmt_f64(report.check.max_relative)
    );
    if let Some(w) = &report.witness {
        println!(
            "witness multiple={} deviation={} input={}",
            w.multiple,
            fmt_f64(w.deviation),
            serde_json::to_string(&w.input).unwrap_or_default()
        );
    }
    Ok(if pass { 0 } else { 1 })
}

/// Writes `transfer.csv` and `transfer.json`; exit 1 when the rate fit fails
/// on a run that is not constant.
pub fn cmd_transfer(cfg: &RunConfig) -> Result<i32> {
    let model = build_model(cfg)?;
    let sampler = cfg.require(&cfg.sampler, "sampler")?;
    let tc = cfg.require(&cfg.transfer, "transfer")?;
    let mut reference = tc.reference.clone();
    let mut ref_err = None;
    if let Some(m) = tc.mean_field_nodes {
        let (v, e) = mean_field_reference(&model, sampler, m)?;
        reference = Reference::Value { value: v };
        ref_err = Some(e);
    }
    let run = run_transfer(&model, sampler, &tc.sizes, tc.trials, &reference)?;
    let mut report = run.report;
    report.reference_error = ref_err;
    let rows = run.points.iter().map(|p| {
        vec![
            p.size.to_string(),
            p.trial.to_string(),
            fmt_f64(p.value),
            fmt_f64(p.distance),
        ]
    });
    let dir = out_dir(cfg);
    write_atomic(&dir.join("transfer.csv"), csv(&["size", "trial", "value", "distance"], rows).as_bytes())?;
    write_json(&dir.join("transfer.json"), &report)?;
    match (&report.fit, report.constant) {
        (Some(f), _) => {
            println!("slope={} diverged={} constant={}", fmt_f64(f.slope), report.diverged, report.constant);
            Ok(0)
        }
        (None, true) => {
            println!("constant=true");
            Ok(0)
        }
        (None, false) => Err(Error::Fit(report.fit_error.clone().unwrap_or_default())),
    }
}

fn save_learner(dir: &Path, run: usize, l: &Learner) -> Result<()> {
    match l {
        Learner::Single(m) => m.params.save(&dir.join(format!("run{run}.dlps"))),
        Learner::Pair(p) => {
            p.base.params.save(&dir.join(format!("run{run}.dlps")))?;
            p.head.save(&dir.join(format!("run{run}.head.dlps")))
        }
    }
}

#[derive(Serialize)]
struct SizegenSummary {
    task: String,
    model: ModelSpec,
    param_count: usize,
    runs: usize,
    train: TrainConfig,
    median_ratio: Vec<(usize, f64)>,
}

/// Writes `sizegen.csv`, `curves.json`, `sizegen.json` and `params/run<r>.dlps`.
pub fn cmd_sizegen(cfg: &RunConfig) -> Result<i32> {
    let task = cfg.require(&cfg.task, "task")?;
    let mut spec = cfg.require(&cfg.model, "model")?.clone();
    let sg = cfg.sizegen.clone().unwrap_or_default();
    let mut train = cfg.train.clone().unwrap_or_default();
    train.seed = cfg.seed;
    if let Some(b) = sg.param_budget {
        spec = budget_spec(&spec, b)?;
    }
    let (data, sets): (_, EvalSets) = match &sg.cache_dir {
        Some(dir) => {
            let data = load_or_generate(dir, task, Pool::Train, task.n_train, task.samples)?;
            let mut sizes = vec![task.n_train];
            sizes.extend(task.n_test.iter().copied().filter(|&n| n != task.n_train));
            let sets = sizes
                .into_iter()
                .map(|n| Ok((n, load_or_generate(dir, task, Pool::Eval, n, task.eval_samples)?)))
                .collect::<Result<_>>()?;
            (data, sets)
        }
        None => (gen_task(task, task.n_train)?, eval_sets(task)?),
    };
    let run = run_sizegen(task, &spec, &train, sg.runs, &data, &sets)?;
    let dir = out_dir(cfg);
    let rows = run.rows.iter().map(|r| {
        vec![
            r.task.clone(),
            r.model.clone(),
            r.n.to_string(),
            r.run.to_string(),
            fmt_f64(r.mse),
            fmt_f64(r.ratio),
        ]
    });
    write_atomic(
        &dir.join("sizegen.csv"),
        csv(&["task", "model", "n", "run", "mse", "ratio"], rows).as_bytes(),
    )?;
    write_json(&dir.join("curves.json"), &run.curves)?;
    let pdir = dir.join("params");
    std::fs::create_dir_all(&pdir)?;
    for (r, l) in run.learners.iter().enumerate() {
        save_learner(&pdir, r, l)?;
    }
    let summary = SizegenSummary {
        task: task.task.name(),
        model: spec,
        param_count: run.param_count,
        runs: sg.runs,
        train,
        median_ratio: task.n_test.iter().map(|&n| (n, run.median_ratio(n).unwrap_or(f64::NAN))).collect(),
    };
    write_json(&dir.join("sizegen.json"), &summary)?;
    for (n, r) in &summary.median_ratio {
        println!("n={n} median_ratio={}", fmt_f64(*r));
    }
    Ok(0)
}

fn diff_or_self(a: &Matrix, b: Option<&Matrix>) -> Result<Matrix> {
    match b {
        Some(b) if b.shape() != a.shape() => Err(Error::InvalidInput("graphs must have the same size".into())),
        Some(b) => Ok(a.sub(b)),
        None => Ok(a.clone()),
    }
}

/// Evaluates one metric and formats the result.
pub fn cmd_metric(kind: MetricKind, a: &Path, b: Option<&Path>, p: f64, restarts: usize, seed: u64) -> Result<String> {
    let x = read_matrix(a)?;
    let y = b.map(read_matrix).transpose()?;
    let need_b = || y.clone().ok_or_else(|| Error::Config { path: "b".into(), message: "this metric needs two inputs".into() });
    Ok(match kind {
        MetricKind::W1d => fmt_f64(wasserstein_1d(x.data(), need_b()?.data(), p)?),
        MetricKind::Wp => fmt_f64(wasserstein_assign(&EmpiricalMeasure::new(x)?, &EmpiricalMeasure::new(need_b()?)?, p)?),
        MetricKind::Cut => {
            let d = diff_or_self(&x, y.as_ref())?;
            let c = cut_bounds(&d, &Matrix::zeros(d.rows(), 1))?;
            match c.exact {
                Some(e) => format!("{} {} {}", fmt_f64(c.lower), fmt_f64(c.upper), fmt_f64(e)),
                None => format!("{} {}", fmt_f64(c.lower), fmt_f64(c.upper)),
            }
        }
        MetricKind::Op2 => {
            let d = diff_or_self(&x, y.as_ref())?;
            fmt_f64(graph_op2(&d, &Matrix::zeros(d.rows(), 1))?)
        }
        MetricKind::Hausdorff => fmt_f64(hausdorff(&x, &need_b()?)?),
        MetricKind::GwTlb => fmt_f64(gw_tlb(&x, &need_b()?, p)?),
        MetricKind::SymDist => fmt_f64(sym_dist_cloud(&x, &need_b()?, p, restarts, seed)?.value),
    })
}
