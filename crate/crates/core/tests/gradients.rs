//! Parameter gradients of the composite loss against central differences.

use gcpinn_core::mapping::GeometricMapping;
use gcpinn_core::model::Model;
use gcpinn_core::network::{init_network, Frontend};
use gcpinn_core::pde::{BenchmarkName, PdeBenchmark};
use gcpinn_core::training::{boundary_entries, evaluate_loss, GPINN_CLIP, sample_collocation, stream_rng, LossInputs, LossWeights};

fn small_model(bench: &PdeBenchmark, mapping: GeometricMapping, frontend: Frontend) -> Model {
    let sizes = [bench.dim(), 6, 5, bench.field_components()];
    let mut net = init_network(11, &sizes, frontend);
    let mut rng = stream_rng(5, 9);
    let p: Vec<f64> = net.params().iter().map(|v| v + 0.3 * rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
    net.set_params(&p);
    Model::new(mapping, net)
}

fn check(bench: &PdeBenchmark, model: Model, gpinn: f64, weights: LossWeights) {
    check_clipped(bench, model, gpinn, f64::INFINITY, weights)
}

fn check_clipped(bench: &PdeBenchmark, mut model: Model, gpinn: f64, gpinn_clip: f64, weights: LossWeights) {
    let mut rng = stream_rng(7, 1);
    let interior = sample_collocation(&bench.domain, 5, &mut rng).unwrap();
    let boundary = boundary_entries(bench, bench.boundary_points(&mut rng).into_iter().take(4).collect());
    let inputs = LossInputs {
        benchmark: bench,
        interior: &interior,
        boundary: &boundary,
        weights,
        reg_coeff: 0.5,
        gpinn,
        gpinn_clip,
    };
    let base = model.params();
    let eval = evaluate_loss(&model, &inputs).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let scale = eval.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        model.set_params(&p);
        let fp = evaluate_loss(&model, &inputs).unwrap().record.total;
        p[i] -= 2.0 * h;
        model.set_params(&p);
        let fm = evaluate_loss(&model, &inputs).unwrap().record.total;
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - eval.grad[i]).abs() / (eval.grad[i].abs().max(1e-2 * scale));
        worst = worst.max(err);
    }
    model.set_params(&base);
    assert!(worst <= 1e-5, "{}: worst relative error {worst:e}", bench.name);
}

const W: LossWeights = LossWeights {
    residual: 1.0,
    boundary: 100.0,
};

#[test]
fn residual_loss_gradients_all_benchmarks() {
    for name in BenchmarkName::ALL {
        let b = PdeBenchmark::new(name);
        let m = small_model(&b, GeometricMapping::identity(b.domain.clone()), Frontend::None);
        check(&b, m, 0.0, W);
    }
}

#[test]
fn gradient_enhanced_term_gradients() {
    for name in [BenchmarkName::Burgers1d, BenchmarkName::Helmholtz1d, BenchmarkName::Ns2d] {
        let b = PdeBenchmark::new(name);
        let m = small_model(&b, GeometricMapping::identity(b.domain.clone()), Frontend::None);
        check(&b, m.clone(), 1e-3, W);
        check_clipped(&b, m, 1e-3, GPINN_CLIP, W);
    }
}

#[test]
fn gradient_enhanced_term_alone() {
    let zero = LossWeights {
        residual: 0.0,
        boundary: 0.0,
    };
    for name in [BenchmarkName::Burgers1d, BenchmarkName::Convdiff1d, BenchmarkName::Ns2d] {
        let b = PdeBenchmark::new(name);
        let m = small_model(&b, GeometricMapping::identity(b.domain.clone()), Frontend::None);
        check(&b, m, 1.0, zero);
    }
}

#[test]
fn trainable_mapping_gradients() {
    let b = PdeBenchmark::new(BenchmarkName::Convdiff1d);
    let radial = GeometricMapping::radial(3.0, b.domain.clone()).with_trainable(true);
    check(&b, small_model(&b, radial, Frontend::None), 0.0, W);
    let local = GeometricMapping::local_stretch(4.0, vec![0.5], b.domain.clone()).with_trainable(true);
    check(&b, small_model(&b, local, Frontend::None), 0.0, W);
    let pwl = GeometricMapping::pwl(b.domain.clone());
    check(&b, small_model(&b, pwl, Frontend::None), 0.0, W);
    let b2 = PdeBenchmark::new(BenchmarkName::Convdiff2d);
    let radial2 = GeometricMapping::radial(3.0, b2.domain.clone()).with_trainable(true);
    check(&b2, small_model(&b2, radial2, Frontend::None), 0.0, W);
}

#[test]
fn fourier_frontend_gradients() {
    let b = PdeBenchmark::new(BenchmarkName::Helmholtz1d);
    let m = small_model(&b, GeometricMapping::identity(b.domain.clone()), Frontend::Fourier { frequencies: vec![0.5, 1.0] });
    check(&b, m, 0.0, W);
    let m = small_model(&b, GeometricMapping::torus(b.domain.clone()), Frontend::Fourier { frequencies: vec![1.0] });
    check(&b, m, 0.0, W);
}

#[test]
fn self_adaptive_weights_scale_terms() {
    let b = PdeBenchmark::new(BenchmarkName::Burgers1d);
    let m = small_model(&b, GeometricMapping::identity(b.domain.clone()), Frontend::None);
    check(&b, m, 0.0, LossWeights { residual: 2.5, boundary: 0.3 });
}
