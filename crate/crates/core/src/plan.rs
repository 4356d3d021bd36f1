//! Truncated multivariate derivative channels.
//!
//! A [`ChannelPlan`] enumerates the partial derivatives carried alongside a
//! value: every sorted multi-index over the variables whose spatial part has
//! length at most `order` and which contains at most one parameter variable.
//! The set is closed under taking sub-multi-indices, so products (Leibniz)
//! and univariate compositions (Faà di Bruno over set partitions) can be
//! evaluated exactly channel by channel.
//!
//! Channel 0 is always the value. Channels are sorted by multi-index length,
//! then lexicographically, so for a purely spatial plan in `d` dimensions the
//! first-order channels are `1..=d`.

use std::collections::HashMap;

/// One term of a composed channel: `coeff * f^(order)(z0) * prod(z[blocks])`.
#[derive(Clone, Debug)]
pub struct ComposeTerm {
    pub coeff: f64,
    pub order: usize,
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ChannelPlan {
    spatial: usize,
    params: usize,
    order: usize,
    multi: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    compose: Vec<Vec<ComposeTerm>>,
    product: Vec<Vec<(f64, usize, usize)>>,
    max_len: usize,
}

impl ChannelPlan {
    /// Purely spatial plan: derivatives up to `order` in `spatial` variables.
    pub fn spatial(spatial: usize, order: usize) -> Self {
        Self::new(spatial, 0, order)
    }

    /// Spatial derivatives up to `order`, each optionally differentiated
    /// once more by one of `params` parameter variables.
    pub fn new(spatial: usize, params: usize, order: usize) -> Self {
        let vars = spatial + params;
        let mut multi: Vec<Vec<usize>> = vec![Vec::new()];
        let max_len = order + usize::from(params > 0);
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for m in &frontier {
                let start = m.last().copied().unwrap_or(0);
                for v in start..vars {
                    let mut cand = m.clone();
                    cand.push(v);
                    let n_param = cand.iter().filter(|&&i| i >= spatial).count();
                    let n_spatial = cand.len() - n_param;
                    if n_param <= 1 && n_spatial <= order {
                        next.push(cand);
                    }
                }
            }
            multi.extend(next.iter().cloned());
            frontier = next;
        }
        multi.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let lookup: HashMap<Vec<usize>, usize> = multi
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();

        let compose = multi
            .iter()
            .map(|m| compose_terms(m, &lookup))
            .collect();
        let product = multi
            .iter()
            .map(|m| product_terms(m, &lookup))
            .collect();
        let max_len = multi.iter().map(Vec::len).max().unwrap_or(0);

        Self {
            spatial,
            params,
            order,
            multi,
            lookup,
            compose,
            product,
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Longest multi-index; compositions need derivatives `0..=max_len`.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn multi_index(&self, channel: usize) -> &[usize] {
        &self.multi[channel]
    }

    /// Channel index of a multi-index given in any order.
    pub fn channel(&self, vars: &[usize]) -> Option<usize> {
        let mut key = vars.to_vec();
        key.sort_unstable();
        self.lookup.get(&key).copied()
    }

    pub fn compose_terms(&self, channel: usize) -> &[ComposeTerm] {
        &self.compose[channel]
    }

    /// `out = f(z)` given `derivs[n] = f^(n)(z[0])` for `n in 0..=max_len`.
    pub fn compose_into(&self, z: &[f64], derivs: &[f64], out: &mut [f64]) {
        for (c, terms) in self.compose.iter().enumerate() {
            let mut acc = 0.0;
            for t in terms {
                let mut p = t.coeff * derivs[t.order];
                for &b in &t.blocks {
                    p *= z[b];
                }
                acc += p;
            }
            out[c] = acc;
        }
    }

    /// Reverse of [`compose_into`](Self::compose_into): accumulates into
    /// `grad_z` the adjoint of `z` given the adjoint `grad_out` of the output.
    /// `derivs` must hold `f^(n)(z[0])` for `n in 0..=max_len + 1`.
    pub fn compose_backward(&self, z: &[f64], derivs: &[f64], grad_out: &[f64], grad_z: &mut [f64]) {
        for (c, terms) in self.compose.iter().enumerate() {
            let g = grad_out[c];
            if g == 0.0 {
                continue;
            }
            for t in terms {
                let mut prod = t.coeff * g;
                for &b in &t.blocks {
                    prod *= z[b];
                }
                grad_z[0] += prod * derivs[t.order + 1];
                let base = t.coeff * g * derivs[t.order];
                for (i, &bi) in t.blocks.iter().enumerate() {
                    let mut p = base;
                    for (j, &bj) in t.blocks.iter().enumerate() {
                        if i != j {
                            p *= z[bj];
                        }
                    }
                    grad_z[bi] += p;
                }
            }
        }
    }

    /// `out = a * b` channel-wise by the Leibniz rule.
    pub fn product_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for (c, terms) in self.product.iter().enumerate() {
            out[c] = terms.iter().map(|&(k, i, j)| k * a[i] * b[j]).sum();
        }
    }
}

fn compose_terms(m: &[usize], lookup: &HashMap<Vec<usize>, usize>) -> Vec<ComposeTerm> {
    if m.is_empty() {
        return vec![ComposeTerm {
            coeff: 1.0,
            order: 0,
            blocks: Vec::new(),
        }];
    }
    let mut merged: Vec<ComposeTerm> = Vec::new();
    for partition in set_partitions(m.len()) {
        let mut blocks: Vec<usize> = partition
            .iter()
            .map(|block| {
                let mut key: Vec<usize> = block.iter().map(|&p| m[p]).collect();
                key.sort_unstable();
                lookup[&key]
            })
            .collect();
        blocks.sort_unstable();
        match merged
            .iter_mut()
            .find(|t| t.order == blocks.len() && t.blocks == blocks)
        {
            Some(t) => t.coeff += 1.0,
            None => merged.push(ComposeTerm {
                coeff: 1.0,
                order: blocks.len(),
                blocks,
            }),
        }
    }
    merged
}

fn product_terms(m: &[usize], lookup: &HashMap<Vec<usize>, usize>) -> Vec<(f64, usize, usize)> {
    let n = m.len();
    let mut merged: Vec<(f64, usize, usize)> = Vec::new();
    for mask in 0u32..(1 << n) {
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for (p, &v) in m.iter().enumerate() {
            if mask & (1 << p) != 0 {
                left.push(v);
            } else {
                right.push(v);
            }
        }
        left.sort_unstable();
        right.sort_unstable();
        let (i, j) = (lookup[&left], lookup[&right]);
        match merged.iter_mut().find(|t| t.1 == i && t.2 == j) {
            Some(t) => t.0 += 1.0,
            None => merged.push((1.0, i, j)),
        }
    }
    merged
}

/// All set partitions of `{0, .., n-1}`.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![Vec::<Vec<usize>>::new()];
    for item in 0..n {
        let mut next = Vec::new();
        for part in &out {
            for b in 0..part.len() {
                let mut p = part.clone();
                p[b].push(item);
                next.push(p);
            }
            let mut p = part.clone();
            p.push(vec![item]);
            next.push(p);
        }
        out = next;
    }
    out
}

/// Derivatives `0..=n` of `tanh` at `z`.
pub fn tanh_derivs(z: f64, n: usize) -> [f64; 6] {
    debug_assert!(n <= 5);
    tanh_derivs_at(z.tanh())
}

/// Same as [`tanh_derivs`] given `t = tanh(z)`.
pub fn tanh_derivs_at(t: f64) -> [f64; 6] {
    let t1 = 1.0 - t * t;
    let t2 = -2.0 * t * t1;
    let t3 = -2.0 * t1 * t1 + 4.0 * t * t * t1;
    let t4 = -4.0 * t1 * t2 + 8.0 * t * t1 * t1 + 4.0 * t * t * t2;
    // d/dz of t4, expanded with t' = t1, t1' = t2, t2' = t3
    let t5 = -4.0 * (t2 * t2 + t1 * t3)
        + 8.0 * (t1 * t1 * t1 + 2.0 * t * t1 * t2)
        + 4.0 * (2.0 * t * t1 * t2 + t * t * t3);
    [t, t1, t2, t3, t4, t5]
}
