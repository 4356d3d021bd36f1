//! Tanh MLP backbone with an optional fixed Fourier-feature frontend.
//!
//! Batched evaluation works on derivative channels: a matrix with one row
//! per unit and `channels * batch` columns, column `c * batch + p` holding
//! channel `c` of point `p`. Affine layers act on every channel with one
//! matrix product (the bias only touches the value columns) and tanh mixes
//! the channels of each unit through the plan's composition rule.


use ndarray::{s, Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{tanh_derivs_at, ChannelPlan};

/// Hidden width used by every benchmark model.
pub const HIDDEN_WIDTH: usize = 80;
/// Number of hidden layers used by every benchmark model.
pub const HIDDEN_LAYERS: usize = 4;
/// Fixed Fourier frequencies of the FF-PINN baseline.
pub const FOURIER_FREQUENCIES: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frontend {
    None,
    /// Features `[xi, sin(2 pi f xi), cos(2 pi f xi)]` per input axis.
    Fourier { frequencies: Vec<f64> },
}

impl Frontend {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Frontend::None => input_dim,
            Frontend::Fourier { frequencies } => input_dim * (1 + 2 * frequencies.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    /// `[input, hidden.., output]` where `input` is the raw coordinate count.
    pub layer_sizes: Vec<usize>,
    pub frontend: Frontend,
    /// `out x in` per layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Standard benchmark shape: four hidden layers of 80 units.
pub fn benchmark_layer_sizes(input: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
    sizes.push(output);
    sizes
}

/// Xavier-uniform weights and zero biases, deterministic in `seed`.
pub fn init_network(seed: u64, layer_sizes: &[usize], frontend: Frontend) -> DenseNetwork {
    assert!(layer_sizes.len() >= 2 && layer_sizes.iter().all(|&n| n >= 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = layer_sizes.to_vec();
    dims[0] = frontend.output_dim(layer_sizes[0]);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(&mut rng)));
        biases.push(Array1::zeros(fan_out));
    }
    DenseNetwork {
        layer_sizes: layer_sizes.to_vec(),
        frontend,
        weights,
        biases,
    }
}

/// Intermediate matrices kept for the reverse pass.
pub struct NetTrace {
    pub batch: usize,
    /// Input to each affine layer (the frontend features for layer 0).
    acts: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    input: Array2<f64>,
    pub output: Array2<f64>,
}

impl DenseNetwork {
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Layer-major flat parameters, weights (row-major) before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend(w.iter());
            p.extend(b.iter());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = p[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = p[off];
                off += 1;
            }
        }
    }

    /// Plain forward pass for one input.
    pub fn forward(&self, xi: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = match &self.frontend {
            Frontend::None => xi.to_vec(),
            Frontend::Fourier { frequencies } => {
                let mut f = xi.to_vec();
                for &x in xi {
                    f.extend(frequencies.iter().map(|w| (2.0 * std::f64::consts::PI * w * x).sin()));
                    f.extend(frequencies.iter().map(|w| (2.0 * std::f64::consts::PI * w * x).cos()));
                }
                f
            }
        };
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z: Vec<f64> = w
                .outer_iter()
                .zip(b.iter())
                .map(|(row, bias)| row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    /// Forward pass on derivative channels; `input` is `input_dim x (C*B)`.
    pub fn forward_channels(&self, plan: &ChannelPlan, input: Array2<f64>, batch: usize) -> Result<NetTrace> {
        let feats = self.frontend_forward(plan, &input, batch);
        let mut acts = vec![feats];
        let mut pre = Vec::new();
        let last = self.weights.len() - 1;
        let mut output = None;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(acts.last().expect("nonempty"));
            z.slice_mut(s![.., ..batch])
                .axis_iter_mut(Axis(1))
                .for_each(|mut col| col += b);
            if l < last {
                let a = activate(plan, &z, batch);
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        location: format!("hidden layer {l} activation"),
                    });
                }
                pre.push(z);
                acts.push(a);
            } else {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        location: format!("output layer {l}"),
                    });
                }
                output = Some(z);
            }
        }
        Ok(NetTrace {
            batch,
            acts,
            pre,
            input,
            output: output.expect("at least one layer"),
        })
    }

    /// Reverse pass. Accumulates parameter adjoints into `grad` (length
    /// [`param_count`](Self::param_count)) and returns the input adjoint when
    /// requested.
    pub fn backward_channels(
        &self,
        plan: &ChannelPlan,
        trace: &NetTrace,
        grad_output: Array2<f64>,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let batch = trace.batch;
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut off = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(off);
            off += w.len() + b.len();
        }
        let mut delta = grad_output;
        for l in (0..self.weights.len()).rev() {
            let w = &self.weights[l];
            let gw = delta.dot(&trace.acts[l].t());
            let start = offsets[l];
            for (g, v) in grad[start..start + w.len()].iter_mut().zip(gw.iter()) {
                *g += v;
            }
            let bstart = start + w.len();
            for (i, row) in delta.outer_iter().enumerate() {
                grad[bstart + i] += row.slice(s![..batch]).sum();
            }
            if l > 0 {
                let ga = w.t().dot(&delta);
                delta = activate_backward(plan, &trace.pre[l - 1], &trace.acts[l], &ga, batch);
            } else if want_input {
                let gf = w.t().dot(&delta);
                return Some(self.frontend_backward(plan, &trace.input, &gf, batch));
            }
        }
        None
    }

    fn frontend_forward(&self, plan: &ChannelPlan, input: &Array2<f64>, batch: usize) -> Array2<f64> {
        let Frontend::Fourier { frequencies } = &self.frontend else {
            return input.clone();
        };
        let d = input.nrows();
        let nf = frequencies.len();
        let cols = input.ncols();
        let c = plan.len();
        let mut out = Array2::zeros((d * (1 + 2 * nf), cols));
        out.slice_mut(s![..d, ..]).assign(input);
        let mut z = vec![0.0; c];
        let mut res = vec![0.0; c];
        for k in 0..d {
            for (j, &f) in frequencies.iter().enumerate() {
                let omega = 2.0 * std::f64::consts::PI * f;
                for p in 0..batch {
                    for ch in 0..c {
                        z[ch] = omega * input[[k, ch * batch + p]];
                    }
                    for (row, trig) in [(d + k * 2 * nf + j, 0usize), (d + k * 2 * nf + nf + j, 1)] {
                        plan.compose_into(&z, &trig_derivs(z[0], trig, plan.max_len()), &mut res);
                        for ch in 0..c {
                            out[[row, ch * batch + p]] = res[ch];
                        }
                    }
                }
            }
        }
        out
    }

    fn frontend_backward(&self, plan: &ChannelPlan, input: &Array2<f64>, grad_feats: &Array2<f64>, batch: usize) -> Array2<f64> {
        let Frontend::Fourier { frequencies } = &self.frontend else {
            return grad_feats.clone();
        };
        let d = input.nrows();
        let nf = frequencies.len();
        let c = plan.len();
        let mut out = grad_feats.slice(s![..d, ..]).to_owned();
        let mut z = vec![0.0; c];
        let mut g_out = vec![0.0; c];
        let mut g_z = vec![0.0; c];
        for k in 0..d {
            for (j, &f) in frequencies.iter().enumerate() {
                let omega = 2.0 * std::f64::consts::PI * f;
                for p in 0..batch {
                    for ch in 0..c {
                        z[ch] = omega * input[[k, ch * batch + p]];
                    }
                    g_z.iter_mut().for_each(|v| *v = 0.0);
                    for (row, trig) in [(d + k * 2 * nf + j, 0usize), (d + k * 2 * nf + nf + j, 1)] {
                        for ch in 0..c {
                            g_out[ch] = grad_feats[[row, ch * batch + p]];
                        }
                        plan.compose_backward(&z, &trig_derivs(z[0], trig, plan.max_len() + 1), &g_out, &mut g_z);
                    }
                    for ch in 0..c {
                        out[[k, ch * batch + p]] += omega * g_z[ch];
                    }
                }
            }
        }
        out
    }
}

/// JSON checkpoint: parameters in the declared flat order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub frontend: Frontend,
    pub params: Vec<f64>,
    pub mapping_params: Vec<f64>,
}

/// Derivatives `0..=n` of `sin` (`kind == 0`) or `cos` (`kind == 1`).
fn trig_derivs(z: f64, kind: usize, n: usize) -> Vec<f64> {
    let (s, c) = z.sin_cos();
    let cycle = if kind == 0 { [s, c, -s, -c] } else { [c, -s, -c, s] };
    (0..=n).map(|k| cycle[k % 4]).collect()
}

/// `tanh` derivatives `0..n` at each point from `ts = tanh(z)`, laid out
/// `[k * batch + p]`.
fn tanh_table(ts: &[f64], batch: usize, n: usize, table: &mut [f64]) {
    for p in 0..batch {
        let d = tanh_derivs_at(ts[p]);
        for k in 0..n {
            table[k * batch + p] = d[k];
        }
    }
}

fn activate(plan: &ChannelPlan, z: &Array2<f64>, batch: usize) -> Array2<f64> {
    let c = plan.len();
    if c == 1 {
        return z.mapv(f64::tanh);
    }
    let n = plan.max_len() + 1;
    let mut out = Array2::zeros(z.raw_dim());
    let mut table = vec![0.0; n * batch];
    for (zrow, mut orow) in z.outer_iter().zip(out.outer_iter_mut()) {
        let zs = zrow.as_slice().expect("standard layout");
        let os = orow.as_slice_mut().expect("standard layout");
        let ts: Vec<f64> = zs[..batch].iter().map(|v| v.tanh()).collect();
        tanh_table(&ts, batch, n, &mut table);
        for ch in 0..c {
            let acc = &mut os[ch * batch..(ch + 1) * batch];
            for t in plan.compose_terms(ch) {
                let d = &table[t.order * batch..(t.order + 1) * batch];
                match t.blocks[..] {
                    [] => acc.iter_mut().zip(d).for_each(|(a, &dv)| *a += t.coeff * dv),
                    [b0] => {
                        let z0 = &zs[b0 * batch..(b0 + 1) * batch];
                        for ((a, &dv), &x0) in acc.iter_mut().zip(d).zip(z0) {
                            *a += t.coeff * dv * x0;
                        }
                    }
                    [b0, b1] => {
                        let z0 = &zs[b0 * batch..(b0 + 1) * batch];
                        let z1 = &zs[b1 * batch..(b1 + 1) * batch];
                        for (((a, &dv), &x0), &x1) in acc.iter_mut().zip(d).zip(z0).zip(z1) {
                            *a += t.coeff * dv * x0 * x1;
                        }
                    }
                    _ => {
                        for (p, a) in acc.iter_mut().enumerate() {
                            let mut v = t.coeff * d[p];
                            for &b in &t.blocks {
                                v *= zs[b * batch + p];
                            }
                            *a += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `a` is the activation output, whose value columns hold `tanh(z)`.
fn activate_backward(plan: &ChannelPlan, z: &Array2<f64>, a: &Array2<f64>, grad_a: &Array2<f64>, batch: usize) -> Array2<f64> {
    let c = plan.len();
    let n = plan.max_len() + 2;
    let mut out = Array2::zeros(z.raw_dim());
    let mut table = vec![0.0; n * batch];
    for (((zrow, arow), grow), mut orow) in z.outer_iter().zip(a.outer_iter()).zip(grad_a.outer_iter()).zip(out.outer_iter_mut()) {
        let zs = zrow.as_slice().expect("standard layout");
        let gs = grow.as_slice().expect("standard layout");
        let os = orow.as_slice_mut().expect("standard layout");
        tanh_table(&arow.as_slice().expect("standard layout")[..batch], batch, n, &mut table);
        for ch in 0..c {
            let g = &gs[ch * batch..(ch + 1) * batch];
            for t in plan.compose_terms(ch) {
                let d = &table[t.order * batch..(t.order + 1) * batch];
                let d_next = &table[(t.order + 1) * batch..(t.order + 2) * batch];
                match t.blocks[..] {
                    [] => {
                        let o0 = &mut os[..batch];
                        for ((o, &gv), &dn) in o0.iter_mut().zip(g).zip(d_next) {
                            *o += t.coeff * gv * dn;
                        }
                    }
                    [b0] => {
                        for p in 0..batch {
                            let x0 = zs[b0 * batch + p];
                            let w = t.coeff * g[p];
                            os[p] += w * x0 * d_next[p];
                            os[b0 * batch + p] += w * d[p];
                        }
                    }
                    [b0, b1] => {
                        for p in 0..batch {
                            let x0 = zs[b0 * batch + p];
                            let x1 = zs[b1 * batch + p];
                            let w = t.coeff * g[p];
                            os[p] += w * x0 * x1 * d_next[p];
                            os[b0 * batch + p] += w * d[p] * x1;
                            os[b1 * batch + p] += w * d[p] * x0;
                        }
                    }
                    _ => {
                        for p in 0..batch {
                            let w = t.coeff * g[p];
                            let mut prod = w;
                            for &b in &t.blocks {
                                prod *= zs[b * batch + p];
                            }
                            os[p] += prod * d_next[p];
                            for (i, &bi) in t.blocks.iter().enumerate() {
                                let mut v = w * d[p];
                                for (j, &bj) in t.blocks.iter().enumerate() {
                                    if i != j {
                                        v *= zs[bj * batch + p];
                                    }
                                }
                                os[bi * batch + p] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
