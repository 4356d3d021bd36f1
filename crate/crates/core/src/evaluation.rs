//! Test-set error metrics and residual neural-tangent-kernel diagnostics.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{plan, Model};
use crate::pde::{BenchmarkName, PdeBenchmark};
use crate::scalar::Dual;
use crate::training::sample_collocation;

pub const TEST_POINTS: usize = 2000;
/// Upper bound on NTK sample size.
pub const NTK_MAX_POINTS: usize = 512;
pub const NTK_POINTS: usize = 128;
pub const NTK_EVERY: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_test: usize,
    pub mse: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
    /// Per-component metrics for vector fields (`u`, `v`, `p`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Metrics>,
}

impl EvaluationReport {
    pub fn headline(&self) -> Metrics {
        Metrics {
            mse: self.mse,
            rel_l2: self.rel_l2,
            rel_h1: self.rel_h1,
        }
    }
}

/// Value and spatial gradient of one scalar field at each point.
struct FieldSamples {
    value: Vec<f64>,
    grad: Vec<Vec<f64>>,
}

fn metrics(pred: &FieldSamples, exact: &FieldSamples) -> Result<Metrics> {
    let n = pred.value.len();
    let (mut e0, mut u0, mut e1, mut u1) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let dv = pred.value[i] - exact.value[i];
        e0 += dv * dv;
        u0 += exact.value[i] * exact.value[i];
        for (a, b) in pred.grad[i].iter().zip(&exact.grad[i]) {
            e1 += (a - b) * (a - b);
            u1 += b * b;
        }
    }
    if !(u0 > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(Metrics {
        mse: e0 / n as f64,
        rel_l2: (e0 / u0).sqrt(),
        rel_h1: ((e0 + e1) / (u0 + u1)).sqrt(),
    })
}

/// Headline field from output channels `[comp][channel]` of order >= 1:
/// the field itself, or the velocity magnitude for Navier-Stokes.
fn headline_field(bench: &PdeBenchmark, d: usize, ch: &[Vec<f64>]) -> (f64, Vec<f64>) {
    if bench.name == BenchmarkName::Ns2d {
        let (u, v) = (&ch[0], &ch[1]);
        let s = (u[0] * u[0] + v[0] * v[0]).sqrt();
        let grad = (1..=d)
            .map(|a| if s > 0.0 { (u[0] * u[a] + v[0] * v[a]) / s } else { 0.0 })
            .collect();
        (s, grad)
    } else {
        (ch[0][0], ch[0][1..=d].to_vec())
    }
}

/// Metrics from predicted and exact channels `[point][comp][channel]`
/// (first-order spatial plan).
pub fn metrics_from_channels(bench: &PdeBenchmark, pred: &[Vec<Vec<f64>>], exact: &[Vec<Vec<f64>>]) -> Result<EvaluationReport> {
    let n = pred.len();
    if n < 2 || exact.len() != n {
        return Err(Error::InvalidArgument("metrics need at least two matched points".into()));
    }
    let d = bench.dim();
    let collect = |src: &[Vec<Vec<f64>>], f: &dyn Fn(&[Vec<f64>]) -> (f64, Vec<f64>)| {
        let (value, grad) = src.iter().map(|c| f(c)).unzip();
        FieldSamples { value, grad }
    };
    let head = |c: &[Vec<f64>]| headline_field(bench, d, c);
    let m = metrics(&collect(pred, &head), &collect(exact, &head))?;
    let mut components = Vec::new();
    if bench.field_components() > 1 {
        for k in 0..bench.field_components() {
            let comp = |c: &[Vec<f64>]| (c[k][0], c[k][1..=d].to_vec());
            components.push(metrics(&collect(pred, &comp), &collect(exact, &comp))?);
        }
    }
    Ok(EvaluationReport {
        n_test: n,
        mse: m.mse,
        rel_l2: m.rel_l2,
        rel_h1: m.rel_h1,
        components,
    })
}

/// MSE, Rel-L2 and Rel-H1 on `n_test` uniform points.
pub fn compute_metrics<R: Rng + ?Sized>(model: &Model, bench: &PdeBenchmark, n_test: usize, rng: &mut R) -> Result<EvaluationReport> {
    if n_test < 2 {
        return Err(Error::InvalidArgument("n_test must be at least 2".into()));
    }
    let points = sample_collocation(&bench.domain, n_test, rng)?;
    let pred = model.channels(&points, 1)?;
    let p = plan(bench.dim(), 0, 1);
    let exact: Vec<Vec<Vec<f64>>> = points
        .iter()
        .map(|x| bench.exact_taylor(&p, x).into_iter().map(|t| t.c).collect())
        .collect();
    metrics_from_channels(bench, &pred, &exact)
}

/// Relative L2 error of the headline field from plain values `[point][comp]`.
pub fn headline_rel_l2(bench: &PdeBenchmark, pred: &[Vec<f64>], exact: &[Vec<f64>]) -> Result<f64> {
    let head = |v: &[f64]| {
        if bench.name == BenchmarkName::Ns2d {
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        } else {
            v[0]
        }
    };
    let (mut e, mut u) = (0.0, 0.0);
    for (a, b) in pred.iter().zip(exact) {
        let (ha, hb) = (head(a), head(b));
        e += (ha - hb) * (ha - hb);
        u += hb * hb;
    }
    if !(u > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((e / u).sqrt())
}

/// Per-seed reports and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seeds: Vec<u64>,
    pub trials: Vec<EvaluationReport>,
    pub mean: Metrics,
}

pub fn summarize_trials(seeds: Vec<u64>, trials: Vec<EvaluationReport>) -> Result<TrialSummary> {
    if trials.is_empty() || seeds.len() != trials.len() {
        return Err(Error::InvalidArgument("one report per seed required".into()));
    }
    let n = trials.len() as f64;
    let mean = Metrics {
        mse: trials.iter().map(|t| t.mse).sum::<f64>() / n,
        rel_l2: trials.iter().map(|t| t.rel_l2).sum::<f64>() / n,
        rel_h1: trials.iter().map(|t| t.rel_h1).sum::<f64>() / n,
    };
    Ok(TrialSummary { seeds, trials, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NtkReport {
    pub kernel: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub effective_rank: f64,
}

/// `exp` of the Shannon entropy of the normalized spectrum. Negative
/// round-off eigenvalues count as zero.
pub fn effective_rank(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: "spectrum".into(),
        });
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroSpectrum);
    }
    let h: f64 = eigenvalues
        .iter()
        .map(|v| v.max(0.0) / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(h.exp())
}

/// Gradients of every residual component over the trainable parameters,
/// one row per (point, component) pair, point-major.
pub fn residual_jacobian(model: &Model, bench: &PdeBenchmark, points: &[Vec<f64>]) -> Result<Array2<f64>> {
    let m = bench.residual_components();
    let n_params = model.trainable_count();
    let p = plan(bench.dim(), 0, 2);
    let c = p.len();
    let mut rows = Array2::zeros((points.len() * m, n_params));
    for (i, x) in points.iter().enumerate() {
        let eval = model.eval_chunk(std::slice::from_ref(x), 2, true)?;
        let ch = eval.point(0);
        let nt = bench.field_components() * c;
        let r = bench.apply_operator::<Dual>(&|k, axes| {
            let idx = p.channel(axes).expect("channel in plan");
            Dual::seed(ch[k][idx], k * c + idx, nt)
        });
        for (comp, rc) in r.iter().enumerate() {
            let mut seed = vec![0.0; nt];
            for (s, dv) in seed.iter_mut().zip(&rc.d) {
                *s = *dv;
            }
            let seed = seed.chunks(c).map(<[f64]>::to_vec).collect::<Vec<_>>();
            let g = model.backward_chunk(&eval, &[seed]);
            rows.row_mut(i * m + comp).assign(&ndarray::ArrayView1::from(&g));
        }
    }
    Ok(rows)
}

/// Residual NTK `K_ij = sum_c <grad R_c(x_i), grad R_c(x_j)>`, its spectrum
/// and effective rank.
pub fn ntk_matrix(model: &Model, bench: &PdeBenchmark, points: &[Vec<f64>]) -> Result<NtkReport> {
    if points.is_empty() || points.len() > NTK_MAX_POINTS {
        return Err(Error::InvalidArgument(format!("NTK needs 1..={NTK_MAX_POINTS} points")));
    }
    let m = bench.residual_components();
    let jac = residual_jacobian(model, bench, points)?;
    let full = jac.dot(&jac.t());
    let n = points.len();
    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            kernel[i][j] = (0..m).map(|c| full[[i * m + c, j * m + c]]).sum();
        }
    }
    // Symmetrize exactly; the products agree only up to summation order.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (kernel[i][j] + kernel[j][i]);
            kernel[i][j] = v;
            kernel[j][i] = v;
        }
    }
    let eigenvalues = symmetric_eigenvalues(&kernel)?;
    let effective_rank = effective_rank(&eigenvalues)?;
    Ok(NtkReport {
        kernel,
        eigenvalues,
        effective_rank,
    })
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    let mat = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let eig = mat.try_symmetric_eigen(f64::EPSILON, 10_000).ok_or(Error::EigenSolver)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}
