//! A mapping composed with a network, evaluated on derivative channels, and
//! the reverse pass that turns per-point channel adjoints into a gradient
//! over every trainable parameter.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::mapping::GeometricMapping;
use crate::network::{Checkpoint, DenseNetwork, NetTrace};
use crate::plan::ChannelPlan;

/// Points per reduction chunk. Fixed so sums do not depend on worker count.
pub const CHUNK: usize = 256;

/// Shared, lazily built channel plans.
pub fn plan(spatial: usize, params: usize, order: usize) -> Arc<ChannelPlan> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<ChannelPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("plan cache poisoned");
    guard
        .entry((spatial, params, order))
        .or_insert_with(|| Arc::new(ChannelPlan::new(spatial, params, order)))
        .clone()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub mapping: GeometricMapping,
    pub network: DenseNetwork,
}

/// One evaluated chunk of points.
pub struct ChunkEval {
    pub plan: Arc<ChannelPlan>,
    pub batch: usize,
    trace: NetTrace,
    /// `d xi[k] channel c / d m_j` per point, laid out `[p][j][k][c]`.
    sens: Option<Vec<f64>>,
}

impl ChunkEval {
    /// Output channels of component `comp` at point `p`.
    pub fn channels(&self, comp: usize, p: usize) -> Vec<f64> {
        let c = self.plan.len();
        (0..c).map(|ch| self.trace.output[[comp, ch * self.batch + p]]).collect()
    }

    /// All components at point `p`, `[comp][channel]`.
    pub fn point(&self, p: usize) -> Vec<Vec<f64>> {
        (0..self.trace.output.nrows()).map(|k| self.channels(k, p)).collect()
    }
}

/// Adjoint of one point's output channels, `[comp][channel]`.
pub type PointSeed = Vec<Vec<f64>>;

impl Model {
    pub fn new(mapping: GeometricMapping, network: DenseNetwork) -> Self {
        assert_eq!(mapping.dim(), network.input_dim());
        Self { mapping, network }
    }

    pub fn dim(&self) -> usize {
        self.mapping.dim()
    }

    pub fn outputs(&self) -> usize {
        self.network.output_dim()
    }

    /// Network parameters followed by trainable mapping parameters.
    pub fn trainable_count(&self) -> usize {
        self.network.param_count() + self.mapping.trainable_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.network.params();
        p.extend(self.mapping.trainable_values());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.network.param_count();
        self.network.set_params(&p[..n]);
        self.mapping.set_trainable_values(&p[n..]);
    }

    /// Network parameters and every declared mapping parameter.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_sizes: self.network.layer_sizes.clone(),
            frontend: self.network.frontend.clone(),
            params: self.network.params(),
            mapping_params: self.mapping.params(),
        }
    }

    /// Loads a checkpoint taken from a model of the same shape.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.layer_sizes != self.network.layer_sizes || ckpt.frontend != self.network.frontend {
            return Err(Error::Checkpoint("network shape does not match".into()));
        }
        if ckpt.params.len() != self.network.param_count() || ckpt.mapping_params.len() != self.mapping.params().len() {
            return Err(Error::Checkpoint(format!(
                "expected {} network and {} mapping parameters, found {} and {}",
                self.network.param_count(),
                self.mapping.params().len(),
                ckpt.params.len(),
                ckpt.mapping_params.len()
            )));
        }
        self.network.set_params(&ckpt.params);
        self.mapping.set_params(&ckpt.mapping_params);
        Ok(())
    }

    /// Forward pass on channels of spatial order `order`. With `with_grad`
    /// the mapping's parameter sensitivities are kept for the reverse pass.
    pub fn eval_chunk(&self, points: &[Vec<f64>], order: usize, with_grad: bool) -> Result<ChunkEval> {
        let d = self.dim();
        let batch = points.len();
        let net_plan = plan(d, 0, order);
        let c = net_plan.len();
        let n_map = if with_grad { self.mapping.trainable_count() } else { 0 };
        let map_plan = if n_map > 0 { plan(d, n_map, order) } else { net_plan.clone() };
        let to_ext: Vec<usize> = (0..c)
            .map(|ch| map_plan.channel(net_plan.multi_index(ch)).expect("sub-plan"))
            .collect();
        let to_sens: Vec<Vec<usize>> = (0..n_map)
            .map(|j| {
                (0..c)
                    .map(|ch| {
                        let mut m = net_plan.multi_index(ch).to_vec();
                        m.push(d + j);
                        map_plan.channel(&m).expect("sensitivity channel")
                    })
                    .collect()
            })
            .collect();

        let mut input = Array2::zeros((d, c * batch));
        let mut sens = (n_map > 0).then(|| vec![0.0; batch * n_map * d * c]);
        for (p, x) in points.iter().enumerate() {
            let xi = self.mapping.eval_channels(&map_plan, x)?;
            for (k, t) in xi.iter().enumerate() {
                for ch in 0..c {
                    input[[k, ch * batch + p]] = t.c[to_ext[ch]];
                }
                if let Some(s) = sens.as_mut() {
                    for (j, idx) in to_sens.iter().enumerate() {
                        for ch in 0..c {
                            s[((p * n_map + j) * d + k) * c + ch] = t.c[idx[ch]];
                        }
                    }
                }
            }
        }
        let trace = self.network.forward_channels(&net_plan, input, batch)?;
        Ok(ChunkEval {
            plan: net_plan,
            batch,
            trace,
            sens,
        })
    }

    /// Gradient over [`params`](Self::params) given per-point output seeds.
    pub fn backward_chunk(&self, eval: &ChunkEval, seeds: &[PointSeed]) -> Vec<f64> {
        let c = eval.plan.len();
        let batch = eval.batch;
        let m = self.outputs();
        let mut g_out = Array2::zeros((m, c * batch));
        for (p, seed) in seeds.iter().enumerate() {
            for (k, comp) in seed.iter().enumerate() {
                for (ch, &v) in comp.iter().enumerate() {
                    g_out[[k, ch * batch + p]] = v;
                }
            }
        }
        let n_net = self.network.param_count();
        let n_map = self.mapping.trainable_count();
        let mut grad = vec![0.0; n_net + n_map];
        let want_input = eval.sens.is_some();
        let g_in = self
            .network
            .backward_channels(&eval.plan, &eval.trace, g_out, &mut grad[..n_net], want_input);
        if let (Some(g_in), Some(sens)) = (g_in, eval.sens.as_ref()) {
            let d = self.dim();
            for p in 0..batch {
                for j in 0..n_map {
                    let mut acc = 0.0;
                    for k in 0..d {
                        for ch in 0..c {
                            acc += g_in[[k, ch * batch + p]] * sens[((p * n_map + j) * d + k) * c + ch];
                        }
                    }
                    grad[n_net + j] += acc;
                }
            }
        }
        grad
    }

    /// Value, gradient and Hessian of every output at `x`.
    pub fn evaluate_jet(&self, x: &[f64]) -> Result<Vec<Jet>> {
        let eval = self.eval_chunk(&[x.to_vec()], 2, false)?;
        Ok((0..self.outputs())
            .map(|k| Jet::from_channels(&eval.plan, &eval.channels(k, 0)))
            .collect())
    }

    /// Output values at each point.
    pub fn values(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let per_chunk: Vec<Result<Vec<Vec<f64>>>> = points
            .par_chunks(CHUNK)
            .map(|chunk| {
                let eval = self.eval_chunk(chunk, 0, false)?;
                Ok((0..chunk.len())
                    .map(|p| (0..self.outputs()).map(|k| eval.channels(k, p)[0]).collect())
                    .collect())
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for r in per_chunk {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Per-point channels of spatial order `order`, `[point][comp][channel]`.
    pub fn channels(&self, points: &[Vec<f64>], order: usize) -> Result<Vec<Vec<Vec<f64>>>> {
        let per_chunk: Vec<Result<Vec<Vec<Vec<f64>>>>> = points
            .par_chunks(CHUNK)
            .map(|chunk| {
                let eval = self.eval_chunk(chunk, order, false)?;
                Ok((0..chunk.len()).map(|p| eval.point(p)).collect())
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for r in per_chunk {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Sum over points of a per-point loss and its gradient over
    /// [`params`](Self::params). `point_loss(index, channels)` returns the
    /// contribution and its adjoint with respect to the channels. Chunks are
    /// reduced in ascending order.
    pub fn loss_parameter_gradient<F>(&self, points: &[Vec<f64>], order: usize, point_loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(usize, &[Vec<f64>]) -> Result<(f64, PointSeed)> + Sync,
    {
        let n = self.trainable_count();
        let per_chunk: Vec<Result<(f64, Vec<f64>)>> = points
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let eval = self.eval_chunk(chunk, order, true)?;
                let mut loss = 0.0;
                let mut seeds = Vec::with_capacity(chunk.len());
                for p in 0..chunk.len() {
                    let (l, s) = point_loss(ci * CHUNK + p, &eval.point(p))?;
                    loss += l;
                    seeds.push(s);
                }
                Ok((loss, self.backward_chunk(&eval, &seeds)))
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n];
        for r in per_chunk {
            let (l, g) = r?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        if let Some(index) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok((loss, grad))
    }
}
