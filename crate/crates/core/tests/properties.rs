use dimlift::consistent::{act, embed, norm, GroupElement, NormKind, SequenceKind, SizedObject};
use dimlift::harness::{sample, Graphon, Limit, SamplerSpec, Scheme, SignalFn};
use dimlift::metrics::{
    cut_norm_exact, graph_op2, gw_tlb, hausdorff, wasserstein_1d, wasserstein_assign, EmpiricalMeasure,
};
use dimlift::tensor::{op_norm_2, svd};
use dimlift::{Matrix, RngStream};
use proptest::prelude::*;

fn gauss(rng: &mut RngStream, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, rng.gaussians(r * c)).unwrap()
}

fn sym_uniform(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.uniform_range(lo, hi);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn object(seq: SequenceKind, n: usize, d: usize, rng: &mut RngStream) -> SizedObject {
    let x = gauss(rng, n, d);
    match seq {
        SequenceKind::DupGraph => SizedObject::graph(sym_uniform(rng, n, 0.0, 1.0), x).unwrap(),
        SequenceKind::DupPointCloud => SizedObject::cloud(x).unwrap(),
        _ => SizedObject::set(x).unwrap(),
    }
}

fn measure(x: &Matrix) -> EmpiricalMeasure {
    EmpiricalMeasure::new(x.clone()).unwrap()
}

fn max_abs(x: &SizedObject) -> f64 {
    match x {
        SizedObject::GraphSignal { adj, x } => adj.max_abs().max(x.max_abs()),
        SizedObject::Set(m) | SizedObject::PointCloud(m) => m.max_abs(),
        SizedObject::Vector(v) => v.iter().fold(0.0, |a, b| a.max(b.abs())),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

const SEQS: [SequenceKind; 4] = [
    SequenceKind::ZeroPadSet,
    SequenceKind::DupSet,
    SequenceKind::DupGraph,
    SequenceKind::DupPointCloud,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mirsky(seed in any::<u64>(), n in 4usize..9, k in 1usize..5) {
        let mut rng = RngStream::new(seed);
        let x = gauss(&mut rng, n, k);
        let y = x.add(&gauss(&mut rng, n, k).scale(rng.uniform()));
        let (sx, sy) = (svd(&x).unwrap().singular, svd(&y).unwrap().singular);
        let lhs: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(lhs <= x.sub(&y).frobenius() + 1e-12);
    }

    #[test]
    fn op_norm_is_homogeneous(seed in any::<u64>(), n in 1usize..12, c in -5.0f64..5.0) {
        let mut rng = RngStream::new(seed);
        let a = sym_uniform(&mut rng, n, -1.0, 1.0);
        let base = op_norm_2(&a).unwrap();
        prop_assert!(close(op_norm_2(&a.scale(c)).unwrap(), c.abs() * base, 1e-8));
    }

    #[test]
    fn embeddings_compose(seed in any::<u64>(), s in 0usize..4, n in 1usize..5, a in 1usize..4, b in 1usize..4) {
        let seq = SEQS[s];
        let mut rng = RngStream::new(seed);
        let x = object(seq, n, 2, &mut rng);
        let (m, big) = (n * a, n * a * b);
        let two = embed(&embed(&x, seq, m).unwrap(), seq, big).unwrap();
        prop_assert_eq!(two, embed(&x, seq, big).unwrap());
    }

    #[test]
    fn compatible_norms_are_isometric(seed in any::<u64>(), s in 0usize..4, n in 1usize..6, m in 1usize..4, p in 1.0f64..4.0) {
        let seq = SEQS[s];
        let mut rng = RngStream::new(seed);
        let x = object(seq, n, 2, &mut rng);
        let big = embed(&x, seq, n * m).unwrap();
        let kinds = match seq {
            SequenceKind::ZeroPadSet => vec![NormKind::Lp(p), NormKind::Lp(f64::INFINITY)],
            SequenceKind::DupGraph => vec![NormKind::GraphP(p), NormKind::GraphOpP(2.0), NormKind::GraphOpP(1.0)],
            _ => vec![NormKind::NormalizedLp(p)],
        };
        let k = seq.eq(&SequenceKind::DupPointCloud).then_some(2);
        let g = GroupElement::random(n, k, &mut rng);
        let gx = act(&g, &x).unwrap();
        for kind in kinds {
            prop_assert!(kind.compatible_with(seq));
            let v = norm(&x, kind).unwrap();
            prop_assert!(close(norm(&big, kind).unwrap(), v, 1e-12), "{kind:?}");
            prop_assert!(close(norm(&gx, kind).unwrap(), v, 1e-10), "{kind:?}");
        }
    }

    #[test]
    fn embeddings_are_equivariant(seed in any::<u64>(), s in 0usize..4, n in 1usize..5, m in 1usize..4) {
        let seq = SEQS[s];
        let mut rng = RngStream::new(seed);
        let x = object(seq, n, 2, &mut rng);
        let k = seq.eq(&SequenceKind::DupPointCloud).then_some(2);
        let g = GroupElement::random(n, k, &mut rng);
        let big = n * m;
        let lhs = embed(&act(&g, &x).unwrap(), seq, big).unwrap();
        let rhs = act(&g.embed(seq, big).unwrap(), &embed(&x, seq, big).unwrap()).unwrap();
        prop_assert!(max_abs(&lhs.sub(&rhs).unwrap()) <= 1e-12);
    }

    #[test]
    fn cut_and_op_norm_sandwich(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = RngStream::new(seed);
        let a = sym_uniform(&mut rng, n, -1.0, 1.0);
        let x = Matrix::column(&(0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>());
        let cut = cut_norm_exact(&a, &x).unwrap();
        let op = graph_op2(&a, &x).unwrap();
        prop_assert!(cut <= op + 1e-12);
        prop_assert!(op <= 2f64.powf(1.5) * cut.sqrt() + 1e-12);
    }

    #[test]
    fn metric_axioms(seed in any::<u64>(), n in 1usize..6, d in 1usize..3, p in 1.0f64..3.0) {
        let mut rng = RngStream::new(seed);
        let (x, y, z) = (gauss(&mut rng, n, d), gauss(&mut rng, n, d), gauss(&mut rng, n, d));
        let w = |a: &Matrix, b: &Matrix| wasserstein_assign(&measure(a), &measure(b), p).unwrap();
        let h = |a: &Matrix, b: &Matrix| hausdorff(a, b).unwrap();
        let (x1, y1, z1) = (x.col(0), y.col(0), z.col(0));
        let w1 = |a: &[f64], b: &[f64]| wasserstein_1d(a, b, p).unwrap();
        for (xy, yx, xz, zy) in [
            (w(&x, &y), w(&y, &x), w(&x, &z), w(&z, &y)),
            (h(&x, &y), h(&y, &x), h(&x, &z), h(&z, &y)),
            (w1(&x1, &y1), w1(&y1, &x1), w1(&x1, &z1), w1(&z1, &y1)),
        ] {
            prop_assert!((xy - yx).abs() <= 1e-9);
            prop_assert!(xy <= xz + zy + 1e-9);
        }
    }

    // Γ carries no factor 1/2, so coupling the clouds by an optimal W_p plan
    // and applying Minkowski gives TLB ≤ 2 W_p, not W_p.
    #[test]
    fn tlb_is_below_twice_wasserstein(seed in any::<u64>(), n in 1usize..6, p in 1.0f64..3.0) {
        let mut rng = RngStream::new(seed);
        let (x, y) = (gauss(&mut rng, n, 2), gauss(&mut rng, n, 2));
        let tlb = gw_tlb(&x, &y, p).unwrap();
        prop_assert!(tlb <= 2.0 * wasserstein_assign(&measure(&x), &measure(&y), p).unwrap() + 1e-9);
    }

    #[test]
    fn metrics_vanish_on_duplicates(seed in any::<u64>(), n in 1usize..5, m in 1usize..4, p in 1.0f64..3.0) {
        let mut rng = RngStream::new(seed);
        let x = gauss(&mut rng, n, 2);
        let big = match embed(&SizedObject::cloud(x.clone()).unwrap(), SequenceKind::DupPointCloud, n * m).unwrap() {
            SizedObject::PointCloud(b) => b,
            _ => unreachable!(),
        };
        prop_assert!(wasserstein_assign(&measure(&x), &measure(&big), p).unwrap() <= 1e-12);
        prop_assert!(wasserstein_1d(&x.col(0), &big.col(0), p).unwrap() <= 1e-12);
        prop_assert!(hausdorff(&x, &big).unwrap() <= 1e-12);
        prop_assert!(gw_tlb(&x, &big, p).unwrap() <= 1e-9);
    }

    #[test]
    fn w1d_grows_with_p(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, p in 1.0f64..3.0, dp in 0.0f64..2.0) {
        let mut rng = RngStream::new(seed);
        let (x, y) = (rng.gaussians(n), rng.gaussians(m));
        prop_assert!(wasserstein_1d(&x, &y, p).unwrap() <= wasserstein_1d(&x, &y, p + dp).unwrap() + 1e-12);
    }

    #[test]
    fn bernoulli_graphs_are_simple(seed in any::<u64>(), n in 1usize..20, trial in 0usize..5) {
        let spec = SamplerSpec::new(
            Limit::Graphon { w: Graphon::Product, signal: SignalFn::default() },
            Scheme::GraphonBernoulli,
            seed,
        );
        let g = sample(&spec, n, trial).unwrap();
        prop_assert_eq!(&g, &sample(&spec, n, trial).unwrap());
        let SizedObject::GraphSignal { adj, .. } = g else { unreachable!() };
        for i in 0..n {
            prop_assert_eq!(adj[(i, i)], 0.0);
            for j in 0..n {
                prop_assert_eq!(adj[(i, j)], adj[(j, i)]);
                prop_assert!(adj[(i, j)] == 0.0 || adj[(i, j)] == 1.0);
            }
        }
    }
}

#[test]
fn symmetric_stretch_exceeds_wasserstein() {
    // {-1, 1} vs {-1-t, 1+t}: W_p = t, while the distance profiles {0, 2}
    // and {0, 2+2t} give TLB = 2t / 2^{1/p}.
    let t = 0.25;
    let x = Matrix::column(&[-1.0, 1.0]);
    let y = Matrix::column(&[-1.0 - t, 1.0 + t]);
    for p in [1.0, 2.0, 3.0] {
        let w = wasserstein_assign(&measure(&x), &measure(&y), p).unwrap();
        let tlb = gw_tlb(&x, &y, p).unwrap();
        assert!((w - t).abs() < 1e-12);
        assert!((tlb - 2.0 * t / 2f64.powf(1.0 / p)).abs() < 1e-12);
    }
}
