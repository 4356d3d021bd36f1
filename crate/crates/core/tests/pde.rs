use gcpinn_core::checks::{run_suite, SUITES};
use gcpinn_core::jet::richardson_oracle;
use gcpinn_core::pde::{amplification_probe, BenchmarkName, ExactField, PdeBenchmark, BOUNDARY_POINTS_2D};
use gcpinn_core::training::stream_rng;
use gcpinn_core::Error;
use proptest::prelude::*;

fn bench_strategy() -> impl Strategy<Value = BenchmarkName> {
    prop::sample::select(BenchmarkName::ALL.to_vec())
}

proptest! {
    #[test]
    fn manufactured_solution_satisfies_the_operator(name in bench_strategy(), seed in any::<u64>()) {
        let b = PdeBenchmark::new(name);
        let x = b.domain.sample_interior(&mut stream_rng(seed, 0));
        let r = b.residual(&ExactField(&b), &x).unwrap();
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-8), "{} {:?}", name, r);
    }
}

#[test]
fn source_gradient_matches_finite_differences() {
    for name in BenchmarkName::ALL {
        let b = PdeBenchmark::new(name);
        let mut rng = stream_rng(5, 50);
        for _ in 0..10 {
            let x = b.domain.sample_interior(&mut rng);
            let with_grad = b.source_term_with_gradient(&x);
            for (k, g) in with_grad.iter().enumerate() {
                assert_eq!(g.v, b.source_term(&x)[k]);
                let fd = richardson_oracle(|p: &[f64]| b.source_term(p)[k], &x, 1e-4).unwrap();
                let scale = fd.grad.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for i in 0..b.dim() {
                    assert!((g.g[i] - fd.grad[i]).abs() / scale < 1e-6, "{name} comp {k} axis {i}");
                }
            }
        }
    }
}

#[test]
fn boundary_points_in_one_dimension_are_the_endpoints() {
    for name in [BenchmarkName::Burgers1d, BenchmarkName::Convdiff1d, BenchmarkName::Helmholtz1d] {
        let b = PdeBenchmark::new(name);
        assert_eq!(b.boundary_points(&mut stream_rng(1, 0)), vec![b.domain.lo.clone(), b.domain.hi.clone()]);
    }
}

#[test]
fn boundary_points_in_two_dimensions_cover_every_edge() {
    let b = PdeBenchmark::new(BenchmarkName::Ns2d);
    let pts = b.boundary_points(&mut stream_rng(1, 0));
    assert_eq!(pts.len(), BOUNDARY_POINTS_2D);
    let mut per_edge = [0usize; 4];
    for p in &pts {
        assert!(b.domain.contains(p));
        let edge = match (p[0], p[1]) {
            (x, _) if x == 0.0 => 0,
            (x, _) if x == 1.0 => 1,
            (_, y) if y == 0.0 => 2,
            (_, y) if y == 1.0 => 3,
            _ => panic!("{p:?} is not on the boundary"),
        };
        per_edge[edge] += 1;
    }
    assert!(per_edge.iter().all(|&n| n > 60 && n < 140), "{per_edge:?}");
}

#[test]
fn exact_field_has_no_boundary_residual() {
    for name in BenchmarkName::ALL {
        let b = PdeBenchmark::new(name);
        for p in b.boundary_points(&mut stream_rng(2, 0)) {
            let r = b.boundary_residual(&ExactField(&b), &p).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-15), "{name} {p:?}");
        }
    }
}

#[test]
fn amplification_of_fine_scales() {
    let r = amplification_probe(0.01, 20_001).unwrap();
    assert!((r.ratio / 1e4 - 1.0).abs() < 0.05, "{}", r.ratio);
    assert!(matches!(amplification_probe(0.01, 200), Err(Error::GridTooCoarse { .. })));
    assert!(amplification_probe(0.0, 100).is_err());
    assert!(amplification_probe(1.5, 100).is_err());
}

#[test]
fn every_check_suite_reports_its_own_name() {
    for suite in SUITES {
        let results = run_suite(suite, 3407).unwrap();
        assert!(!results.is_empty());
        assert!(results.iter().all(|r| r.suite == suite));
        assert!(results.iter().all(|r| r.measured.is_finite()));
    }
}

#[test]
fn check_suites_pass_except_the_local_identity_limit() {
    let failed: Vec<String> = run_suite("all", 3407)
        .unwrap()
        .into_iter()
        .filter(|r| !r.passed)
        .map(|r| r.property)
        .collect();
    assert!(failed.iter().all(|p| p == "local stretch identity beyond 3/sqrt(beta)"), "{failed:?}");
}
