use gcpinn_core::method::{MappingOptions, Method, Strategy};
use gcpinn_core::model::Model;
use gcpinn_core::pde::{BenchmarkName, PdeBenchmark};
use gcpinn_core::training::{
    boundary_entries, evaluate_loss, gpinn_coefficient, sample_collocation, stream_rng, total_loss, train, LossInputs, LossWeights, Stage,
    StrategyState, Trainer, TrainingOutcome, TrainingSchedule, GPINN_CLIP, GPINN_LAMBDA, RAR_ADD, RAR_CAPACITY,
};
use gcpinn_core::Error;
use rand::Rng;

fn tiny_schedule(strategy: Strategy) -> TrainingSchedule {
    let mut s = TrainingSchedule::desk(strategy);
    s.adam.steps = 12;
    s.adam.points = 64;
    s.lbfgs.steps = 4;
    s.lbfgs.points = 128;
    s
}

fn run(bench: &PdeBenchmark, method: Method, schedule: &TrainingSchedule) -> (Model, TrainingOutcome) {
    let mut model = method.build_model(bench, schedule.seed, &MappingOptions::default()).unwrap();
    let out = train(&mut model, bench, schedule, &mut ()).unwrap();
    (model, out)
}

fn bits(out: &TrainingOutcome) -> Vec<(usize, u64, u64, Option<u64>)> {
    out.log
        .iter()
        .map(|r| (r.iteration, r.total.to_bits(), r.residual.to_bits(), r.test_rel_l2.map(f64::to_bits)))
        .collect()
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let bench = PdeBenchmark::new(BenchmarkName::Burgers1d);
    for method in [Method::GcLocal, Method::Sa, Method::Rar, Method::Gpinn] {
        let s = tiny_schedule(method.strategy());
        let (ma, a) = run(&bench, method, &s);
        let (mb, b) = run(&bench, method, &s);
        assert_eq!(bits(&a), bits(&b), "{method}");
        assert_eq!(ma, mb);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let bench = PdeBenchmark::new(BenchmarkName::Convdiff2d);
    let mut s = tiny_schedule(Strategy::Vanilla);
    s.adam.points = 600;
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| bits(&run(&bench, Method::GcRadial, &s).1))
    };
    assert_eq!(go(1), go(3));
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let bench = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let mut s = tiny_schedule(Strategy::Vanilla);
    s.adam.steps = 0;
    s.lbfgs.steps = 0;
    let before = Method::Pinn.build_model(&bench, s.seed, &MappingOptions::default()).unwrap();
    let (after, out) = run(&bench, Method::Pinn, &s);
    assert_eq!(before, after);
    assert!(out.log.is_empty());
    assert!(out.lbfgs.is_none());
}

#[test]
fn lbfgs_rows_never_increase_loss() {
    let bench = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let mut s = tiny_schedule(Strategy::Vanilla);
    s.lbfgs.steps = 15;
    let (_, out) = run(&bench, Method::GcTorus, &s);
    let lb: Vec<f64> = out.log.iter().filter(|r| r.stage == Stage::Lbfgs).map(|r| r.total).collect();
    assert!(!lb.is_empty());
    assert!(lb.windows(2).all(|w| w[1] <= w[0]), "{lb:?}");
}

#[test]
fn self_adaptive_weights_are_frozen_during_lbfgs() {
    let bench = PdeBenchmark::new(BenchmarkName::Burgers1d);
    let s = tiny_schedule(Strategy::Sa);
    let mut model = Method::Sa.build_model(&bench, s.seed, &MappingOptions::default()).unwrap();
    let mut trainer = Trainer::new(&bench, &s).unwrap();
    trainer.run_adam_stage(&mut model, &mut ()).unwrap();
    let after_adam = trainer.state.sa_log_weights;
    assert_ne!(after_adam, [0.0, 0.0]);
    let (rows, _) = trainer.run_lbfgs_stage(&mut model, &mut ()).unwrap();
    assert_eq!(trainer.state.sa_log_weights, after_adam);
    let w = trainer.state.weights(s.bc_weight);
    for r in &rows {
        let parts = w.residual * r.residual + w.boundary * r.boundary + r.regularization;
        assert!((r.total - parts).abs() <= 1e-12 * r.total.abs(), "{r:?}");
    }
}

#[test]
fn zero_log_weights_reproduce_unit_weights() {
    let bench = PdeBenchmark::new(BenchmarkName::Burgers1d);
    let s = tiny_schedule(Strategy::Sa);
    let model = Method::Sa.build_model(&bench, 1, &MappingOptions::default()).unwrap();
    let mut rng = stream_rng(1, 40);
    let interior = sample_collocation(&bench.domain, 50, &mut rng).unwrap();
    let boundary = boundary_entries(&bench, bench.boundary_points(&mut rng));
    let state = StrategyState::new(Strategy::Sa);
    let sa = total_loss(&model, &bench, &interior, &boundary, &s, &state, Stage::Adam, 0).unwrap();
    let plain = evaluate_loss(
        &model,
        &LossInputs {
            benchmark: &bench,
            interior: &interior,
            boundary: &boundary,
            weights: LossWeights {
                residual: 1.0,
                boundary: 1.0,
            },
            reg_coeff: s.mapping_reg_coeff,
            gpinn: 0.0,
            gpinn_clip: GPINN_CLIP,
        },
    )
    .unwrap();
    assert_eq!(sa.record.total, plain.record.total);
    assert_eq!(sa.grad, plain.grad);
}

#[test]
fn gradient_enhancement_schedule() {
    assert_eq!(gpinn_coefficient(0), 0.0);
    assert_eq!(gpinn_coefficient(1999), 0.0);
    assert!((gpinn_coefficient(3000) - 0.5 * GPINN_LAMBDA).abs() < 1e-20);
    assert_eq!(gpinn_coefficient(4000), GPINN_LAMBDA);
    assert_eq!(gpinn_coefficient(10_000), GPINN_LAMBDA);
}

#[test]
fn gradient_enhancement_is_off_in_lbfgs() {
    let bench = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let s = tiny_schedule(Strategy::Gpinn);
    let model = Method::Gpinn.build_model(&bench, 2, &MappingOptions::default()).unwrap();
    let mut rng = stream_rng(2, 41);
    let interior = sample_collocation(&bench.domain, 40, &mut rng).unwrap();
    let boundary = boundary_entries(&bench, bench.boundary_points(&mut rng));
    let state = StrategyState::new(Strategy::Gpinn);
    let adam = total_loss(&model, &bench, &interior, &boundary, &s, &state, Stage::Adam, 5000).unwrap();
    let lbfgs = total_loss(&model, &bench, &interior, &boundary, &s, &state, Stage::Lbfgs, 5000).unwrap();
    assert!(adam.record.strategy > 0.0);
    assert_eq!(lbfgs.record.strategy, 0.0);
    assert_eq!(lbfgs.record.total, lbfgs.record.residual + 100.0 * lbfgs.record.boundary + lbfgs.record.regularization);
}

#[test]
fn refinement_adds_the_largest_residuals() {
    let bench = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let model = Method::Rar.build_model(&bench, 3, &MappingOptions::default()).unwrap();
    let mut rng = stream_rng(3, 42);
    let mut state = StrategyState::new(Strategy::Rar);
    state.rar_pool = sample_collocation(&bench.domain, 3000, &mut rng).unwrap();
    let candidates = sample_collocation(&bench.domain, 8000, &mut rng).unwrap();
    assert_eq!(state.refine(&model, &bench, &candidates).unwrap(), RAR_ADD);
    assert_eq!(state.rar_pool.len(), 3500);
    let r2 = |x: &Vec<f64>| bench.residual(&model, x).unwrap()[0].powi(2);
    let weakest_added = state.rar_pool[3000..].iter().map(r2).fold(f64::INFINITY, f64::min);
    let skipped_best = candidates
        .iter()
        .filter(|c| !state.rar_pool[3000..].contains(c))
        .map(r2)
        .fold(0.0, f64::max);
    assert!(weakest_added >= skipped_best);
}

#[test]
fn refinement_respects_capacity() {
    let bench = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let model = Method::Rar.build_model(&bench, 3, &MappingOptions::default()).unwrap();
    let mut state = StrategyState::new(Strategy::Rar);
    state.rar_pool = vec![vec![0.5]; RAR_CAPACITY - 200];
    let candidates = sample_collocation(&bench.domain, 1000, &mut stream_rng(4, 43)).unwrap();
    assert_eq!(state.refine(&model, &bench, &candidates).unwrap(), 200);
    assert_eq!(state.rar_pool.len(), RAR_CAPACITY);
    assert_eq!(state.refine(&model, &bench, &candidates).unwrap(), 0);
}

#[test]
fn collocation_sampling() {
    let d1 = gcpinn_core::domain::DomainBox::unit(1);
    assert!(sample_collocation(&d1, 0, &mut stream_rng(1, 1)).is_err());
    let a = sample_collocation(&d1, 1, &mut stream_rng(9, 1)).unwrap();
    let b = sample_collocation(&d1, 1, &mut stream_rng(9, 1)).unwrap();
    assert_eq!(a, b);
    let many = sample_collocation(&d1, 100_000, &mut stream_rng(9, 2)).unwrap();
    let mean = many.iter().map(|p| p[0]).sum::<f64>() / many.len() as f64;
    assert!((mean - 0.5).abs() < 0.01);
    let d2 = gcpinn_core::domain::DomainBox::unit(2);
    let pts = sample_collocation(&d2, 10_000, &mut stream_rng(9, 3)).unwrap();
    assert!(pts.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn streams_are_independent() {
    let mut a = stream_rng(3407, 1);
    let mut b = stream_rng(3407, 2);
    let xa: Vec<f64> = (0..4).map(|_| a.gen()).collect();
    let xb: Vec<f64> = (0..4).map(|_| b.gen()).collect();
    assert_ne!(xa, xb);
}

#[test]
fn checkpoint_round_trip() {
    let bench = PdeBenchmark::new(BenchmarkName::Convdiff1d);
    let opts = MappingOptions {
        train_mapping: true,
        ..MappingOptions::default()
    };
    let mut model = Method::GcLocal.build_model(&bench, 8, &opts).unwrap();
    let mut p = model.params();
    let mut rng = stream_rng(8, 44);
    p.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    model.set_params(&p);
    let json = serde_json::to_string(&model.checkpoint()).unwrap();
    let mut fresh = Method::GcLocal.build_model(&bench, 99, &opts).unwrap();
    fresh.restore(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(fresh.params(), model.params());
    let pts = vec![vec![0.1], vec![0.45], vec![0.9]];
    assert_eq!(fresh.values(&pts).unwrap(), model.values(&pts).unwrap());

    let mut other = Method::Ff.build_model(&bench, 1, &opts).unwrap();
    assert!(matches!(other.restore(&model.checkpoint()), Err(Error::Checkpoint(_))));
}
