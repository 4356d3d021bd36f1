//! Composite loss, the two-stage Adam then L-BFGS protocol, and the
//! strategy-specific state of the baselines.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainBox;
use crate::error::{Error, Result};
use crate::evaluation::headline_rel_l2;
use crate::method::Strategy;
use crate::model::{Model, PointSeed};
use crate::optim::{lbfgs, Adam, LbfgsOptions, LbfgsOutcome};
use crate::pde::PdeBenchmark;
use crate::scalar::{Dual, Grad1};

pub const DEFAULT_SEED: u64 = 3407;
pub const BC_WEIGHT: f64 = 100.0;
pub const MAPPING_REG_COEFF: f64 = 1e-6;
pub const DIVERGENCE_LOSS: f64 = 1e12;
pub const TEST_POINTS: usize = 2000;
pub const TEST_EVERY: usize = 100;

pub const SA_CLIP: (f64, f64) = (1e-3, 1e3);

pub const RAR_EVERY: usize = 500;
pub const RAR_CANDIDATES: usize = 8000;
pub const RAR_ADD: usize = 500;
pub const RAR_CAPACITY: usize = 60_000;

pub const GPINN_LAMBDA: f64 = 5e-6;
pub const GPINN_WARMUP: usize = 2000;
pub const GPINN_RAMP: usize = 2000;
pub const GPINN_CLIP: f64 = 100.0;
pub const GPINN_DEN_EPS: f64 = 1e-8;

/// Random streams derived from the run seed.
pub const STREAM_TRAINING: u64 = 1;
pub const STREAM_TEST: u64 = 2;
pub const STREAM_NTK: u64 = 3;
pub const STREAM_METRICS: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub lr: f64,
    pub points: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub seed: u64,
    pub adam: StageBudget,
    pub lbfgs: StageBudget,
    pub lbfgs_history: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub grad_tol: f64,
    pub bc_weight: f64,
    pub mapping_reg_coeff: f64,
    pub strategy: Strategy,
}

impl TrainingSchedule {
    /// Full budget: Adam 6000 steps on 3000 points, L-BFGS 500 steps on
    /// 15000 points.
    pub fn full(strategy: Strategy) -> Self {
        Self {
            seed: DEFAULT_SEED,
            adam: StageBudget {
                lr: 1e-3,
                points: 3000,
                steps: 6000,
            },
            lbfgs: StageBudget {
                lr: 1.0,
                points: 15_000,
                steps: 500,
            },
            lbfgs_history: 50,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            grad_tol: 1e-10,
            bc_weight: BC_WEIGHT,
            mapping_reg_coeff: MAPPING_REG_COEFF,
            strategy,
        }
    }

    /// Scaled budget: Adam 2000 steps on 1000 points, L-BFGS 200 steps on
    /// 4000 points.
    pub fn desk(strategy: Strategy) -> Self {
        let mut s = Self::full(strategy);
        s.adam.points = 1000;
        s.adam.steps = 2000;
        s.lbfgs.points = 4000;
        s.lbfgs.steps = 200;
        s
    }

    pub fn lbfgs_options(&self) -> LbfgsOptions {
        LbfgsOptions {
            lr: self.lbfgs.lr,
            history: self.lbfgs_history,
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            grad_tol: self.grad_tol,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Adam,
    Lbfgs,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Adam => "adam",
            Stage::Lbfgs => "lbfgs",
        }
    }
}

/// Per-strategy training state.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyState {
    pub strategy: Strategy,
    /// Log-weights (residual, boundary) of the self-adaptive baseline.
    pub sa_log_weights: [f64; 2],
    /// Collocation pool of the refinement baseline: the initial uniform
    /// points followed by every refined point.
    pub rar_pool: Vec<Vec<f64>>,
    pub rar_added: usize,
}

impl StrategyState {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            sa_log_weights: [0.0; 2],
            rar_pool: Vec::new(),
            rar_added: 0,
        }
    }

    /// Effective (residual, boundary) weights.
    pub fn weights(&self, bc_weight: f64) -> LossWeights {
        if self.strategy == Strategy::Sa {
            let w = |s: f64| s.exp().clamp(SA_CLIP.0, SA_CLIP.1);
            LossWeights {
                residual: w(self.sa_log_weights[0]),
                boundary: w(self.sa_log_weights[1]),
            }
        } else {
            LossWeights {
                residual: 1.0,
                boundary: bc_weight,
            }
        }
    }

    /// Adds the `RAR_ADD` largest-residual candidates, respecting the
    /// capacity. Returns how many points were added.
    pub fn refine(&mut self, model: &Model, benchmark: &PdeBenchmark, candidates: &[Vec<f64>]) -> Result<usize> {
        let room = RAR_CAPACITY.saturating_sub(self.rar_pool.len());
        let take = RAR_ADD.min(room).min(candidates.len());
        if take == 0 {
            return Ok(0);
        }
        let r = residuals(model, benchmark, candidates)?;
        let mut order: Vec<(f64, usize)> = r
            .iter()
            .enumerate()
            .map(|(i, v)| (v.iter().map(|x| x * x).sum(), i))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &order[..take] {
            self.rar_pool.push(candidates[i].clone());
        }
        self.rar_added += take;
        Ok(take)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub residual: f64,
    pub boundary: f64,
}

/// Gradient-enhancement coefficient at an Adam iteration: zero during the
/// warm-up, then a linear ramp to `GPINN_LAMBDA`.
pub fn gpinn_coefficient(iteration: usize) -> f64 {
    if iteration < GPINN_WARMUP {
        0.0
    } else if iteration >= GPINN_WARMUP + GPINN_RAMP {
        GPINN_LAMBDA
    } else {
        GPINN_LAMBDA * (iteration - GPINN_WARMUP) as f64 / GPINN_RAMP as f64
    }
}

/// A Dirichlet condition on selected components at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryEntry {
    pub point: Vec<f64>,
    pub components: Vec<usize>,
    pub target: Vec<f64>,
}

/// Boundary conditions for a batch of boundary points, plus the pressure
/// gauge pin where the benchmark has one.
pub fn boundary_entries(benchmark: &PdeBenchmark, points: Vec<Vec<f64>>) -> Vec<BoundaryEntry> {
    let comps = benchmark.boundary_components().to_vec();
    let mut out: Vec<BoundaryEntry> = points
        .into_iter()
        .map(|p| {
            let exact = benchmark.manufactured_solution(&p);
            BoundaryEntry {
                target: comps.iter().map(|&k| exact[k]).collect(),
                components: comps.clone(),
                point: p,
            }
        })
        .collect();
    if let Some(pin) = benchmark.pressure_pin() {
        let exact = benchmark.manufactured_solution(&pin);
        let p = benchmark.field_components() - 1;
        out.push(BoundaryEntry {
            target: vec![exact[p]],
            components: vec![p],
            point: pin,
        });
    }
    out
}

/// `n` uniform points in the open box.
pub fn sample_collocation<R: Rng + ?Sized>(domain: &DomainBox, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("collocation batch must be nonempty".into()));
    }
    Ok((0..n).map(|_| domain.sample_interior(rng)).collect())
}

/// Residual vectors at each point.
pub fn residuals(model: &Model, benchmark: &PdeBenchmark, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let ch = model.channels(points, 2)?;
    let plan = crate::model::plan(benchmark.dim(), 0, 2);
    Ok(points
        .par_iter()
        .zip(ch.par_iter())
        .map(|(x, c)| benchmark.residual_from_channels(&plan, c, x))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub total: f64,
    /// Mean over points of the squared residual norm.
    pub residual: f64,
    /// Mean over boundary entries of the squared boundary error.
    pub boundary: f64,
    /// Weighted degeneracy penalty.
    pub regularization: f64,
    /// Weighted gradient-enhancement term.
    pub strategy: f64,
    pub weights: (f64, f64),
}

/// Loss value, gradient over the model parameters, and gradient over the
/// self-adaptive log-weights.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub record: LossRecord,
    pub grad: Vec<f64>,
    pub sa_grad: [f64; 2],
}

/// Everything `total_loss` needs besides the model.
pub struct LossInputs<'a> {
    pub benchmark: &'a PdeBenchmark,
    pub interior: &'a [Vec<f64>],
    pub boundary: &'a [BoundaryEntry],
    pub weights: LossWeights,
    pub reg_coeff: f64,
    /// Gradient-enhancement coefficient; zero disables the term.
    pub gpinn: f64,
    /// Cap on the normalized gradient-enhancement ratio.
    pub gpinn_clip: f64,
}

/// Loss and parameter gradient of the composite objective:
/// `w_r * mean|R|^2 + w_b * mean|B|^2 + reg * penalty + gpinn term`.
pub fn evaluate_loss(model: &Model, inputs: &LossInputs<'_>) -> Result<LossEval> {
    let bench = inputs.benchmark;
    let n = inputs.interior.len();
    if n == 0 || inputs.boundary.is_empty() {
        return Err(Error::InvalidArgument("loss batches must be nonempty".into()));
    }
    let d = bench.dim();
    let m = bench.field_components();
    let with_g = inputs.gpinn > 0.0;
    let order = if with_g { 3 } else { 2 };
    let plan = crate::model::plan(d, 0, order);
    let c = plan.len();
    let idx = |axes: &[usize]| plan.channel(axes).expect("channel in plan");

    let sources: Vec<Vec<Grad1<f64>>> = inputs
        .interior
        .par_iter()
        .map(|x| {
            if with_g {
                bench.source_term_with_gradient(x)
            } else {
                bench
                    .source_term(x)
                    .into_iter()
                    .map(|v| Grad1 { v, g: Vec::new() })
                    .collect()
            }
        })
        .collect();

    // First pass for the gradient-enhancement normalization.
    let mut g_term = 0.0;
    let mut g_coeffs = None;
    if with_g {
        let ch = model.channels(inputs.interior, order)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (i, pc) in ch.iter().enumerate() {
            let r = bench.apply_operator::<Grad1<f64>>(&|k, axes| Grad1 {
                v: pc[k][idx(axes)],
                g: (0..d)
                    .map(|a| {
                        let mut ax = axes.to_vec();
                        ax.push(a);
                        pc[k][idx(&ax)]
                    })
                    .collect(),
            });
            for (rc, fc) in r.iter().zip(&sources[i]) {
                for a in 0..d {
                    let v = rc.g.get(a).copied().unwrap_or(0.0) - fc.g[a];
                    num += v * v;
                }
            }
            for comp in pc {
                for a in 0..d {
                    den += comp[idx(&[a])].powi(2);
                }
            }
        }
        let num = num / n as f64;
        let den = den / n as f64 + GPINN_DEN_EPS;
        let ratio = num / den;
        g_term = inputs.gpinn * ratio.min(inputs.gpinn_clip);
        if ratio < inputs.gpinn_clip {
            g_coeffs = Some((inputs.gpinn / den / n as f64, inputs.gpinn * num / (den * den) / n as f64));
        }
    }

    let w = inputs.weights;
    let (res_sum, mut grad) = model.loss_parameter_gradient(inputs.interior, order, |i, pc| {
        let nt = m * c;
        let r = bench.apply_operator::<Dual>(&|k, axes| {
            let ch = idx(axes);
            Dual::seed(pc[k][ch], k * c + ch, nt)
        });
        let mut loss = 0.0;
        let mut seed = vec![0.0; nt];
        for (rc, fc) in r.iter().zip(&sources[i]) {
            let v = rc.v - fc.v;
            loss += v * v;
            for (s, dv) in seed.iter_mut().zip(&rc.d) {
                *s += w.residual * 2.0 * v * dv / n as f64;
            }
        }
        if let Some((a, b)) = g_coeffs {
            let rg = bench.apply_operator::<Grad1<Dual>>(&|k, axes| {
                let ch = idx(axes);
                Grad1 {
                    v: Dual::seed(pc[k][ch], k * c + ch, nt),
                    g: (0..d)
                        .map(|ax| {
                            let mut full = axes.to_vec();
                            full.push(ax);
                            let ch = idx(&full);
                            Dual::seed(pc[k][ch], k * c + ch, nt)
                        })
                        .collect(),
                }
            });
            for (rc, fc) in rg.iter().zip(&sources[i]) {
                for ax in 0..d {
                    let Some(gd) = rc.g.get(ax) else { continue };
                    let v = gd.v - fc.g[ax];
                    for (s, dv) in seed.iter_mut().zip(&gd.d) {
                        *s += a * 2.0 * v * dv;
                    }
                }
            }
            for k in 0..m {
                for ax in 0..d {
                    let ch = idx(&[ax]);
                    seed[k * c + ch] -= b * 2.0 * pc[k][ch];
                }
            }
        }
        let seed: PointSeed = seed.chunks(c).map(<[f64]>::to_vec).collect();
        Ok((loss / n as f64, seed))
    })?;

    let nb = inputs.boundary.len() as f64;
    let (bc_sum, bc_grad) = model.loss_parameter_gradient(
        &inputs.boundary.iter().map(|e| e.point.clone()).collect::<Vec<_>>(),
        0,
        |i, pc| {
            let e = &inputs.boundary[i];
            let mut seed = vec![vec![0.0]; m];
            let mut loss = 0.0;
            for (&k, &t) in e.components.iter().zip(&e.target) {
                let v = pc[k][0] - t;
                loss += v * v;
                seed[k][0] = w.boundary * 2.0 * v / nb;
            }
            Ok((loss / nb, seed))
        },
    )?;
    for (a, b) in grad.iter_mut().zip(&bc_grad) {
        *a += b;
    }

    let penalty = model.mapping.degeneracy_penalty();
    let n_net = model.network.param_count();
    for (a, b) in grad[n_net..].iter_mut().zip(model.mapping.degeneracy_penalty_gradient()) {
        *a += inputs.reg_coeff * b;
    }

    let record = LossRecord {
        total: w.residual * res_sum + w.boundary * bc_sum + inputs.reg_coeff * penalty + g_term,
        residual: res_sum,
        boundary: bc_sum,
        regularization: inputs.reg_coeff * penalty,
        strategy: g_term,
        weights: (w.residual, w.boundary),
    };
    if !record.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: 0,
            residual: record.residual,
            boundary: record.boundary,
            regularization: record.regularization,
            strategy: record.strategy,
        });
    }
    Ok(LossEval {
        sa_grad: [w.residual * res_sum, w.boundary * bc_sum],
        record,
        grad,
    })
}

/// The composite loss at a given stage and iteration, with weights and the
/// gradient-enhancement coefficient taken from the schedule and state.
pub fn total_loss(
    model: &Model,
    benchmark: &PdeBenchmark,
    interior: &[Vec<f64>],
    boundary: &[BoundaryEntry],
    schedule: &TrainingSchedule,
    state: &StrategyState,
    stage: Stage,
    iteration: usize,
) -> Result<LossEval> {
    let gpinn = if state.strategy == Strategy::Gpinn && stage == Stage::Adam {
        gpinn_coefficient(iteration)
    } else {
        0.0
    };
    let mut eval = evaluate_loss(
        model,
        &LossInputs {
            benchmark,
            interior,
            boundary,
            weights: state.weights(schedule.bc_weight),
            reg_coeff: schedule.mapping_reg_coeff,
            gpinn,
            gpinn_clip: GPINN_CLIP,
        },
    )
    .map_err(|e| match e {
        Error::NonFiniteLoss {
            residual,
            boundary,
            regularization,
            strategy,
            ..
        } => Error::NonFiniteLoss {
            iteration,
            residual,
            boundary,
            regularization,
            strategy,
        },
        other => other,
    })?;
    if state.strategy == Strategy::Sa {
        for (g, s) in eval.sa_grad.iter_mut().zip(state.sa_log_weights) {
            let e = s.exp();
            if !(e > SA_CLIP.0 && e < SA_CLIP.1) {
                *g = 0.0;
            }
        }
    } else {
        eval.sa_grad = [0.0; 2];
    }
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub stage: Stage,
    pub total: f64,
    pub residual: f64,
    pub boundary: f64,
    pub regularization: f64,
    pub strategy: f64,
    pub test_rel_l2: Option<f64>,
}

impl LogRow {
    fn new(iteration: usize, stage: Stage, r: &LossRecord) -> Self {
        Self {
            iteration,
            stage,
            total: r.total,
            residual: r.residual,
            boundary: r.boundary,
            regularization: r.regularization,
            strategy: r.strategy,
            test_rel_l2: None,
        }
    }
}

/// Hooks into the training loop.
pub trait TrainingObserver {
    fn on_row(&mut self, _row: &LogRow) -> Result<()> {
        Ok(())
    }
    /// Called before Adam step `iteration`.
    fn on_adam_step(&mut self, _iteration: usize, _model: &Model) -> Result<()> {
        Ok(())
    }
    /// Called after a stage with the number of iterations completed so far.
    fn on_stage_end(&mut self, _stage: Stage, _iteration: usize, _model: &Model) -> Result<()> {
        Ok(())
    }
}

impl TrainingObserver for () {}

/// Mutable context shared by both stages.
pub struct Trainer<'a> {
    pub benchmark: &'a PdeBenchmark,
    pub schedule: &'a TrainingSchedule,
    pub state: StrategyState,
    rng: ChaCha8Rng,
    test_points: Vec<Vec<f64>>,
    test_exact: Vec<Vec<f64>>,
}

impl<'a> Trainer<'a> {
    pub fn new(benchmark: &'a PdeBenchmark, schedule: &'a TrainingSchedule) -> Result<Self> {
        let mut test_rng = stream_rng(schedule.seed, STREAM_TEST);
        let test_points = sample_collocation(&benchmark.domain, TEST_POINTS, &mut test_rng)?;
        let test_exact = test_points.iter().map(|x| benchmark.manufactured_solution(x)).collect();
        Ok(Self {
            benchmark,
            schedule,
            state: StrategyState::new(schedule.strategy),
            rng: stream_rng(schedule.seed, STREAM_TRAINING),
            test_points,
            test_exact,
        })
    }

    pub fn test_rel_l2(&self, model: &Model) -> Result<f64> {
        let pred = model.values(&self.test_points)?;
        headline_rel_l2(self.benchmark, &pred, &self.test_exact)
    }

    fn check(&self, iteration: usize, r: &LossRecord) -> Result<()> {
        if !r.total.is_finite() || r.total > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                iteration,
                loss: r.total,
            });
        }
        Ok(())
    }

    /// Adam on fresh batches each step.
    pub fn run_adam_stage(&mut self, model: &mut Model, observer: &mut dyn TrainingObserver) -> Result<Vec<LogRow>> {
        let budget = self.schedule.adam;
        let bench = self.benchmark;
        let mut params = model.params();
        let mut adam = Adam::new(params.len(), budget.lr);
        let mut sa_adam = Adam::new(2, budget.lr);
        let mut rows = Vec::with_capacity(budget.steps);
        if self.state.strategy == Strategy::Rar && budget.steps > 0 && self.state.rar_pool.is_empty() {
            self.state.rar_pool = sample_collocation(&bench.domain, budget.points, &mut self.rng)?;
        }
        for it in 0..budget.steps {
            observer.on_adam_step(it, model)?;
            let interior = if self.state.strategy == Strategy::Rar {
                let pool = &self.state.rar_pool;
                (0..budget.points)
                    .map(|_| pool[self.rng.gen_range(0..pool.len())].clone())
                    .collect()
            } else {
                sample_collocation(&bench.domain, budget.points, &mut self.rng)?
            };
            let boundary = boundary_entries(bench, bench.boundary_points(&mut self.rng));
            let eval = total_loss(model, bench, &interior, &boundary, self.schedule, &self.state, Stage::Adam, it)?;
            self.check(it, &eval.record)?;
            let mut row = LogRow::new(it, Stage::Adam, &eval.record);
            if it % TEST_EVERY == 0 || it + 1 == budget.steps {
                row.test_rel_l2 = Some(self.test_rel_l2(model)?);
            }
            observer.on_row(&row)?;
            rows.push(row);

            adam.step(&mut params, &eval.grad);
            model.set_params(&params);
            if self.state.strategy == Strategy::Sa {
                // Weights ascend the loss.
                let neg = [-eval.sa_grad[0], -eval.sa_grad[1]];
                sa_adam.step(&mut self.state.sa_log_weights, &neg);
                let (lo, hi) = (SA_CLIP.0.ln(), SA_CLIP.1.ln());
                for s in &mut self.state.sa_log_weights {
                    *s = s.clamp(lo, hi);
                }
            }
            if self.state.strategy == Strategy::Rar && (it + 1) % RAR_EVERY == 0 {
                let candidates = sample_collocation(&bench.domain, RAR_CANDIDATES, &mut self.rng)?;
                self.state.refine(model, bench, &candidates)?;
            }
        }
        observer.on_stage_end(Stage::Adam, budget.steps, model)?;
        Ok(rows)
    }

    /// L-BFGS on one fixed batch; strategy weights are frozen and the
    /// gradient-enhancement term is off.
    pub fn run_lbfgs_stage(&mut self, model: &mut Model, observer: &mut dyn TrainingObserver) -> Result<(Vec<LogRow>, Option<LbfgsOutcome>)> {
        let budget = self.schedule.lbfgs;
        let offset = self.schedule.adam.steps;
        if budget.steps == 0 {
            observer.on_stage_end(Stage::Lbfgs, offset, model)?;
            return Ok((Vec::new(), None));
        }
        let bench = self.benchmark;
        let mut interior = sample_collocation(&bench.domain, budget.points, &mut self.rng)?;
        if self.state.strategy == Strategy::Rar {
            let start = self.state.rar_pool.len() - self.state.rar_added;
            interior.extend_from_slice(&self.state.rar_pool[start..]);
        }
        let boundary = boundary_entries(bench, bench.boundary_points(&mut self.rng));
        let last = RefCell::new(None::<LossRecord>);
        let mut probe = model.clone();
        let schedule = self.schedule;
        let state = &self.state;
        let mut objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            probe.set_params(x);
            let eval = total_loss(&probe, bench, &interior, &boundary, schedule, state, Stage::Lbfgs, offset)?;
            let out = (eval.record.total, eval.grad);
            *last.borrow_mut() = Some(eval.record);
            Ok(out)
        };
        let mut x = model.params();
        let mut rows = Vec::new();
        let mut eval_model = model.clone();
        let test = |m: &Model| self.test_rel_l2(m);
        let outcome = lbfgs(&mut objective, &mut x, budget.steps, &self.schedule.lbfgs_options(), |it, _fx, xn| {
            let record = last.borrow().clone().expect("objective evaluated");
            let iteration = offset + it;
            self.check(iteration, &record)?;
            let mut row = LogRow::new(iteration, Stage::Lbfgs, &record);
            if iteration % TEST_EVERY == 0 || it + 1 == budget.steps {
                eval_model.set_params(xn);
                row.test_rel_l2 = Some(test(&eval_model)?);
            }
            observer.on_row(&row)?;
            rows.push(row);
            Ok(())
        })?;
        model.set_params(&x);
        if let Some(row) = rows.last_mut() {
            if row.test_rel_l2.is_none() {
                row.test_rel_l2 = Some(self.test_rel_l2(model)?);
            }
        }
        observer.on_stage_end(Stage::Lbfgs, offset + outcome.iterations, model)?;
        Ok((rows, Some(outcome)))
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub log: Vec<LogRow>,
    pub state: StrategyState,
    pub lbfgs: Option<LbfgsOutcome>,
}

/// Both stages in sequence.
pub fn train(model: &mut Model, benchmark: &PdeBenchmark, schedule: &TrainingSchedule, observer: &mut dyn TrainingObserver) -> Result<TrainingOutcome> {
    let mut trainer = Trainer::new(benchmark, schedule)?;
    let mut log = trainer.run_adam_stage(model, observer)?;
    let (rows, lbfgs) = trainer.run_lbfgs_stage(model, observer)?;
    log.extend(rows);
    Ok(TrainingOutcome {
        log,
        state: trainer.state,
        lbfgs,
    })
}
