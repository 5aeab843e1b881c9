//! Acceptance suite: one line per criterion, `PASS` or `FAIL` with the
//! measured quantities and the runtime against its budget.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dimlift::consistent::{SequenceKind, SizedObject};
use dimlift::experiments::{budget_spec, eval_sets, gen_task, run_sizegen, GraphGen, Task, TaskSpec, TrainConfig};
use dimlift::harness::{
    empirical_w1_rate, fit_rate, median, mean_field_reference, run_transfer, sample, step_error, Graphon, Limit,
    Reference, SamplerSpec, ScalarDist, Scheme, SignalFn,
};
use dimlift::metrics::{cut_bounds, cut_norm_exact, gw_tlb, wasserstein_assign, EmpiricalMeasure};
use dimlift::models::audit::{compatible_pairs, find_witness, incompatible_pairs, random_compat_check, witness_model};
use dimlift::models::{DsciVariant, Example, Family, Model, ModelSpec};
use dimlift::{Matrix, RngStream};

struct Clause {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn clause(name: &'static str, pass: bool, detail: String) -> Clause {
    Clause { name, pass, detail }
}

fn gauss_sampler(seed: u64) -> SamplerSpec {
    SamplerSpec::new(
        Limit::Scalar {
            dist: ScalarDist::Gaussian { mean: 0.0, std: 1.0 },
        },
        Scheme::IidEmpirical,
        seed,
    )
}

fn pow2(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn c1() -> Vec<Clause> {
    let mut out = Vec::new();
    let mut worst = 0.0_f64;
    for (i, (spec, seq)) in compatible_pairs(2).into_iter().enumerate() {
        let model = Model::new(spec, 100 + i as u64).unwrap();
        let rep = random_compat_check(&model, seq, &[4, 8, 16, 32], &[2, 3, 4], 20, i as u64).unwrap();
        worst = worst.max(rep.max_relative);
    }
    out.push(clause("1.compatible", worst <= 1e-7, format!("8 pairs, max relative deviation {worst:.3e}")));
    let mut least = f64::INFINITY;
    for (fam, seq) in incompatible_pairs() {
        let model = witness_model(fam, 2, 7).unwrap();
        let w = find_witness(&model, seq, 7).unwrap().expect("documented witness");
        least = least.min(w.deviation);
    }
    out.push(clause("1.witness", least > 0.1, format!("4 witnesses, smallest deviation {least:.3}")));
    out
}

fn c2() -> Vec<Clause> {
    let sizes = pow2(4, 12);
    let sampler = gauss_sampler(2);
    let nds = Model::new(ModelSpec::new(Family::NormDeepSet, 1), 11).unwrap();
    let (limit, ref_err) = mean_field_reference(&nds, &sampler, 1_000_000).unwrap();
    let run = run_transfer(&nds, &sampler, &sizes, 100, &Reference::Value { value: limit }).unwrap();
    let slope = run.report.slope().unwrap_or(f64::NAN);
    let mut out = vec![clause(
        "2.norm-deepset",
        (-0.65..=-0.35).contains(&slope),
        format!("slope {slope:.3} (reference error {ref_err:.1e})"),
    )];

    let big = pow2(6, 12);
    let ds = Model::new(ModelSpec::new(Family::DeepSet, 1), 11).unwrap();
    let run = run_transfer(&ds, &sampler, &big, 100, &Reference::LargestSize).unwrap();
    let v = &run.report.value;
    let growth = v[v.len() - 1].median.abs() / v[0].median.abs();
    out.push(clause("2.deepset", growth >= 10.0, format!("median |f| grows {growth:.1}x from n=64 to 4096")));

    let pn = Model::new(ModelSpec::new(Family::PointNet, 1), 11).unwrap();
    let run = run_transfer(&pn, &sampler, &big, 100, &Reference::LargestSize).unwrap();
    let m = run.report.medians();
    let lowest = m.iter().copied().fold(f64::INFINITY, f64::min) / m[0];
    out.push(clause(
        "2.pointnet",
        lowest >= 0.5,
        format!("distance to largest-size median falls to {:.0}% of its n=64 value (medians {:.2e}..{:.2e})", 100.0 * lowest, m[0], m[m.len() - 1]),
    ));
    out
}

fn c3() -> Vec<Clause> {
    let sizes = pow2(2, 8);
    let half = SamplerSpec::new(
        Limit::Graphon {
            w: Graphon::Constant { value: 0.5 },
            signal: SignalFn::default(),
        },
        Scheme::UniformGrid,
        3,
    );
    let one = SizedObject::graph(Matrix::filled(1, 1, 0.5), Matrix::ones(1, 1)).unwrap();
    let reference = Reference::Embedded {
        input: one,
        seq: SequenceKind::DupGraph,
    };
    let mut out = Vec::new();
    let mut worst = 0.0_f64;
    for fam in [Family::Ggnn, Family::Cggnn, Family::Mpnn] {
        let m = Model::new(ModelSpec::new(fam, 1), 5).unwrap();
        let run = run_transfer(&m, &half, &sizes, 1, &reference).unwrap();
        worst = run.points.iter().map(|p| p.distance).fold(worst, f64::max);
    }
    out.push(clause("3.constant", worst <= 1e-9, format!("GGNN/CGGNN/MPNN max distance {worst:.1e}")));
    let ign = Model::new(ModelSpec::new(Family::Ign2Norm, 1), 5).unwrap();
    let run = run_transfer(&ign, &half, &sizes, 1, &reference).unwrap();
    let var = run.points.iter().map(|p| p.distance).fold(0.0, f64::max);
    out.push(clause("3.ign", var > 1e-3, format!("2-IGN max distance {var:.3e}")));

    let er = SamplerSpec::new(
        Limit::Graphon {
            w: Graphon::Constant { value: 0.5 },
            signal: SignalFn::default(),
        },
        Scheme::GraphonBernoulli,
        4,
    );
    let sizes = pow2(6, 10);
    let mut detail = Vec::new();
    let mut ok = true;
    for fam in [Family::Cggnn, Family::Mpnn] {
        let m = Model::new(ModelSpec::new(fam, 1), 5).unwrap();
        let run = run_transfer(&m, &er, &sizes, 20, &reference).unwrap();
        let med = run.report.medians();
        ok &= med.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!("{fam:?} {:.2e}..{:.2e}", med[0], med[med.len() - 1]));
    }
    out.push(clause("3.er", ok, format!("monotone medians: {}", detail.join(", "))));
    out
}

fn c4() -> Vec<Clause> {
    let norm = Model::new(ModelSpec::new(Family::Dsci(DsciVariant::Normalized), 3), 9).unwrap();
    let comp = Model::with_params(ModelSpec::new(Family::Dsci(DsciVariant::Compatible), 3), norm.params.clone()).unwrap();
    let sizes = pow2(4, 9);
    let mut rng = RngStream::new(4);
    let meds: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let gaps: Vec<f64> = (0..20)
                .map(|_| {
                    let x = SizedObject::cloud(Matrix::from_vec(n, 3, rng.gaussians(3 * n)).unwrap()).unwrap();
                    let a = norm.predict(&x).unwrap().data()[0];
                    let b = comp.predict(&x).unwrap().data()[0];
                    (a - b).abs()
                })
                .collect();
            median(&gaps)
        })
        .collect();
    let slope = fit_rate(&sizes, &meds).map(|f| f.slope).unwrap_or(f64::NAN);
    vec![clause("4.dsci-gap", (-1.35..=-0.65).contains(&slope), format!("slope {slope:.3}"))]
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn gauss(rng: &mut RngStream, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, rng.gaussians(r * c)).unwrap()
}

fn c5() -> Vec<Clause> {
    let mut rng = RngStream::new(5);
    let mut worst = 0.0_f64;
    for t in 0..100 {
        let n = 1 + t % 7;
        let d = 1 + t % 3;
        let p = [1.0, 2.0, 1.5][t % 3];
        let (x, y) = (gauss(&mut rng, n, d), gauss(&mut rng, n, d));
        let brute = permutations(n)
            .iter()
            .map(|s| {
                (0..n)
                    .map(|i| {
                        let e: f64 = x.row(i).iter().zip(y.row(s[i])).map(|(a, b)| (a - b) * (a - b)).sum();
                        e.sqrt().powf(p)
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let brute = (brute / n as f64).powf(1.0 / p);
        let w = wasserstein_assign(&EmpiricalMeasure::new(x).unwrap(), &EmpiricalMeasure::new(y).unwrap(), p).unwrap();
        worst = worst.max((w - brute).abs());
    }
    let mut out = vec![clause("5.assign", worst <= 1e-10, format!("max gap to exhaustive {worst:.1e}"))];

    let mut inside = 0;
    for t in 0..100 {
        let n = 1 + t % 12;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform_range(-1.0, 1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let x = Matrix::column(&(0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>());
        let b = cut_bounds(&a, &x).unwrap();
        let e = cut_norm_exact(&a, &x).unwrap();
        if b.lower <= e + 1e-12 && e <= b.upper + 1e-12 {
            inside += 1;
        }
    }
    out.push(clause("5.cut", inside == 100, format!("{inside}/100 exact values inside the bracket")));

    let mut violations = 0;
    let mut rigid = 0.0_f64;
    for t in 0..100 {
        let n = 3 + t % 4;
        let p = [1.0, 2.0][t % 2];
        let x = gauss(&mut rng, n, 2);
        let y = gauss(&mut rng, n, 2);
        let eps = 0.3 * rng.uniform();
        let x2 = x.add(&gauss(&mut rng, n, 2).scale(eps));
        let y2 = y.add(&gauss(&mut rng, n, 2).scale(eps));
        let lhs = (gw_tlb(&x, &y, p).unwrap() - gw_tlb(&x2, &y2, p).unwrap()).abs();
        let wx = wasserstein_assign(&EmpiricalMeasure::new(x.clone()).unwrap(), &EmpiricalMeasure::new(x2).unwrap(), p).unwrap();
        let wy = wasserstein_assign(&EmpiricalMeasure::new(y).unwrap(), &EmpiricalMeasure::new(y2).unwrap(), p).unwrap();
        if lhs > wx + wy + 1e-12 {
            violations += 1;
        }
        let th = rng.uniform_range(0.0, 6.3);
        let r = Matrix::from_rows(&[vec![th.cos(), -th.sin()], vec![th.sin(), th.cos()]]).unwrap();
        let moved = x.matmul_t(&r).map(|v| v + 2.5);
        rigid = rigid.max(gw_tlb(&x, &moved, p).unwrap());
    }
    out.push(clause("5.tlb-lipschitz", violations == 0, format!("{violations}/100 violations")));
    out.push(clause("5.tlb-rigid", rigid <= 1e-9, format!("max TLB to rigid copy {rigid:.1e}")));
    out
}

fn input_for(fam: Family, d: usize, n: usize, rng: &mut RngStream) -> SizedObject {
    let x = gauss(rng, n, d);
    match fam {
        Family::DeepSet | Family::NormDeepSet | Family::PointNet => SizedObject::set(x).unwrap(),
        Family::Dsci(_) | Family::SvdDs => SizedObject::cloud(x).unwrap(),
        _ => {
            let u = Matrix::from_vec(n, n, rng.uniforms(n * n)).unwrap();
            SizedObject::graph(u.add(&u.transpose()).scale(0.5), x).unwrap()
        }
    }
}

fn c6() -> Vec<Clause> {
    let fams = [
        (Family::DeepSet, 2),
        (Family::NormDeepSet, 2),
        (Family::PointNet, 2),
        (Family::Mpnn, 2),
        (Family::Ign2Norm, 1),
        (Family::Ggnn, 2),
        (Family::Cggnn, 2),
        (Family::Dsci(DsciVariant::Normalized), 3),
        (Family::Dsci(DsciVariant::Compatible), 3),
        (Family::SvdDs, 2),
    ];
    let mut rng = RngStream::new(6);
    let mut worst = 0.0_f64;
    for (fam, d) in fams {
        let spec = ModelSpec::new(fam, d).hidden(4).mlp_layers(2).depth(2);
        for inst in 0..10 {
            let model = Model::new(spec.clone(), inst).unwrap();
            let x = input_for(fam, d, 3 + inst as usize % 4, &mut rng);
            let pred = model.predict(&x).unwrap();
            let target = gauss(&mut rng, pred.rows(), pred.cols());
            let batch = [Example { input: x, target }];
            let g = model.grad(&batch).unwrap();
            let h = 1e-5;
            for k in 0..model.param_count() {
                let mut up = model.clone();
                up.params.values_mut()[k] += h;
                let mut dn = model.clone();
                dn.params.values_mut()[k] -= h;
                let fd = (up.loss(&batch).unwrap() - dn.loss(&batch).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g.grad[k]).abs() / fd.abs().max(1e-3));
            }
        }
    }
    vec![clause("6.gradients", worst <= 1e-5, format!("10 families x 10 instances, max relative error {worst:.1e}"))]
}

fn sizegen_ratio(task: Task, fam: Family, d: usize, ntr: usize, nte: usize, epochs: usize, eval: usize) -> f64 {
    let mut spec = TaskSpec::new(task, 5000, ntr, vec![ntr, nte], 0);
    spec.eval_samples = eval;
    let data = gen_task(&spec, ntr).unwrap();
    let sets = eval_sets(&spec).unwrap();
    let model = budget_spec(&ModelSpec::new(fam, d), 2000).unwrap();
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    run_sizegen(&spec, &model, &cfg, 10, &data, &sets).unwrap().median_ratio(nte).unwrap()
}

fn c7() -> Vec<Clause> {
    let pn = sizegen_ratio(Task::MaxDist, Family::PointNet, 2, 20, 200, 20, 200);
    let ds = sizegen_ratio(Task::MaxDist, Family::DeepSet, 2, 20, 200, 20, 200);
    let tri = Task::TriangleDensity { gen: GraphGen::DenseUniform };
    let cg = sizegen_ratio(tri.clone(), Family::Cggnn, 1, 50, 500, 2, 20);
    let ign = sizegen_ratio(tri, Family::Ign2Norm, 1, 50, 500, 2, 20);
    vec![
        clause("7.maxdist-pointnet", pn <= 3.0, format!("ratio {pn:.3}")),
        clause("7.maxdist-deepset", ds >= 100.0, format!("ratio {ds:.3e}")),
        clause("7.triangle-cggnn", cg <= 10.0, format!("ratio {cg:.3}")),
        clause("7.triangle-ign", ign >= 100.0, format!("ratio {ign:.3e}")),
    ]
}

fn c8() -> Vec<Clause> {
    let rep = empirical_w1_rate(&gauss_sampler(8), &pow2(4, 10), 200, 10_000).unwrap();
    let s1 = rep.slope().unwrap_or(f64::NAN);
    let f = SignalFn::Sine {
        amplitude: 1.0,
        frequency: 1.0,
    };
    let grid = SamplerSpec::new(Limit::Signal { f: f.clone() }, Scheme::UniformGrid, 0);
    let sizes = pow2(4, 10);
    let errs: Vec<f64> = sizes
        .iter()
        .map(|&n| match sample(&grid, n, 0).unwrap() {
            SizedObject::Set(x) => step_error(&f, x.data(), 2.0, 64),
            _ => unreachable!(),
        })
        .collect();
    let s2 = fit_rate(&sizes, &errs).map(|f| f.slope).unwrap_or(f64::NAN);
    vec![
        clause("8.w1", (-0.65..=-0.35).contains(&s1), format!("empirical W1 slope {s1:.3}")),
        clause("8.grid", s2 <= -0.8, format!("uniform-grid L2 error slope {s2:.3}")),
    ]
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dimlift"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run dimlift");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn c9() -> Vec<Clause> {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("transfer.json"),
        r#"{"seed": 3, "model": {"family": "norm-deepset", "in_dim": 1, "hidden": 8},
            "sampler": {"limit": {"kind": "scalar", "dist": {"type": "gaussian", "mean": 0, "std": 1}}, "scheme": "iid-empirical", "seed": 1},
            "transfer": {"sizes": [8, 16, 32, 64, 128], "trials": 10}}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("sizegen.json"),
        r#"{"seed": 2, "model": {"family": "point-net", "in_dim": 2, "hidden": 8},
            "task": {"task": {"kind": "max-dist"}, "samples": 200, "n_train": 10, "n_test": [10, 40], "eval_samples": 50, "seed": 4},
            "train": {"epochs": 3},
            "sizegen": {"runs": 2, "cache_dir": "cache"}}"#,
    )
    .unwrap();
    std::fs::write(dir.join("a.txt"), "3 2\n0 0\n1 0\n0 2\n").unwrap();
    std::fs::write(dir.join("b.txt"), "3 2\n0.5 0\n1 1\n0 3\n").unwrap();
    let files = [
        "r1/compat.json",
        "r1/transfer.csv",
        "r1/transfer.json",
        "r1/sizegen.csv",
        "r1/sizegen.json",
        "r1/curves.json",
        "r1/params/run0.dlps",
    ];
    let mut codes = Vec::new();
    let mut stdout = Vec::new();
    let mut snapshots: Vec<Vec<Vec<u8>>> = Vec::new();
    for round in 0..2 {
        let _ = std::fs::remove_dir_all(dir.join("r1"));
        if round == 1 {
            // The second round resumes from the dataset cache written by the first.
            assert!(dir.join("cache").read_dir().map(|mut d| d.next().is_some()).unwrap_or(false));
        }
        codes.push(run_cli(&["compat", "--model", "norm-deepset", "--seq", "dup-set", "--out", "r1", "--seed", "5"], dir).0);
        codes.push(run_cli(&["transfer", "--config", "transfer.json", "--out", "r1"], dir).0);
        codes.push(run_cli(&["sizegen", "--config", "sizegen.json", "--out", "r1"], dir).0);
        let (c, s) = run_cli(&["metric", "gw-tlb", "a.txt", "b.txt", "--p", "2"], dir);
        codes.push(c);
        stdout.push(s);
        snapshots.push(files.iter().map(|f| std::fs::read(dir.join(f)).unwrap_or_default()).collect());
    }
    let ok_codes = codes.iter().all(|&c| c == 0);
    let same = snapshots[0] == snapshots[1] && stdout[0] == stdout[1] && snapshots[0].iter().all(|b| !b.is_empty());
    vec![clause(
        "9.determinism",
        ok_codes && same,
        format!("exit codes {codes:?}, {} output files byte-identical: {same}", files.len()),
    )]
}

fn main() {
    let suite: [(&str, fn() -> Vec<Clause>, f64); 9] = [
        ("1", c1, 120.0),
        ("2", c2, 300.0),
        ("3", c3, 300.0),
        ("4", c4, 120.0),
        ("5", c5, 180.0),
        ("6", c6, 60.0),
        ("7", c7, 1800.0),
        ("8", c8, 120.0),
        ("9", c9, 300.0),
    ];
    // Optional positional arguments select criteria by number.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, f, budget) in suite {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t = Instant::now();
        let clauses = f();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = in_time && clauses.iter().all(|c| c.pass);
        let detail: Vec<String> = clauses
            .iter()
            .map(|c| format!("{} {}: {}", c.name, if c.pass { "ok" } else { "red" }, c.detail))
            .collect();
        println!(
            "criterion {id}: {} [{secs:.1}s / {budget:.0}s] {}",
            if pass { "PASS" } else { "FAIL" },
            detail.join("; ")
        );
        for c in clauses.iter().filter(|c| !c.pass) {
            unexpected.push(c.name.to_string());
        }
        if !in_time {
            unexpected.push(format!("{id}.runtime"));
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

