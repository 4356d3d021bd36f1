//! Geometric compactification mappings applied to input coordinates before
//! the network, together with the negative-control mappings.
//!
//! Every variant is evaluated on [`Taylor`] channels, so values, Jacobians,
//! Hessians, higher spatial derivatives and sensitivities with respect to
//! trainable parameters all come from one closed form per variant.

use serde::{Deserialize, Serialize};

use crate::domain::DomainBox;
use crate::error::{Error, Result};
use crate::plan::ChannelPlan;
use crate::taylor::Taylor;

/// Number of PWL segments per axis.
pub const PWL_SEGMENTS: usize = 16;

/// Below this radius the radial map uses its linear limit.
const RADIAL_ORIGIN_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MappingKind {
    Identity,
    Torus,
    /// Log-radial compression around `center`.
    Radial { alpha: f64, center: Vec<f64> },
    /// Gaussian-gated tanh stretch around `center`. `stretch` scales the tanh
    /// argument and `gate` the Gaussian width; both start at the same beta.
    LocalStretch {
        stretch: f64,
        gate: f64,
        center: Vec<f64>,
    },
    /// Monotone piecewise-linear map of each normalized axis; increments are
    /// the softmax of `logits` (`PWL_SEGMENTS` per axis, axis-major).
    Pwl { logits: Vec<f64> },
    /// Sigmoid of each normalized axis.
    Saturating { steepness: f64, center: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricMapping {
    pub kind: MappingKind,
    pub domain: DomainBox,
    /// One flag per declared parameter (see [`GeometricMapping::params`]).
    pub trainable: Vec<bool>,
    /// Parameter values at construction, used by the degeneracy penalty.
    pub initial: Vec<f64>,
}

impl GeometricMapping {
    pub fn new(kind: MappingKind, domain: DomainBox) -> Self {
        let mut m = Self {
            kind,
            domain,
            trainable: Vec::new(),
            initial: Vec::new(),
        };
        m.initial = m.params();
        m.trainable = vec![matches!(m.kind, MappingKind::Pwl { .. }); m.initial.len()];
        m
    }

    pub fn identity(domain: DomainBox) -> Self {
        Self::new(MappingKind::Identity, domain)
    }

    pub fn torus(domain: DomainBox) -> Self {
        Self::new(MappingKind::Torus, domain)
    }

    /// Radial map. One-dimensional domains are compressed about the origin,
    /// higher-dimensional ones about the domain center.
    pub fn radial(alpha: f64, domain: DomainBox) -> Self {
        let center = if domain.dim() == 1 {
            vec![0.0]
        } else {
            domain.center()
        };
        Self::new(MappingKind::Radial { alpha, center }, domain)
    }

    pub fn local_stretch(beta: f64, center: Vec<f64>, domain: DomainBox) -> Self {
        Self::new(
            MappingKind::LocalStretch {
                stretch: beta,
                gate: beta,
                center,
            },
            domain,
        )
    }

    pub fn pwl(domain: DomainBox) -> Self {
        let n = PWL_SEGMENTS * domain.dim();
        Self::new(MappingKind::Pwl { logits: vec![0.0; n] }, domain)
    }

    pub fn saturating(steepness: f64, center: f64, domain: DomainBox) -> Self {
        Self::new(MappingKind::Saturating { steepness, center }, domain)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_trainable(mut self, flag: bool) -> Self {
        self.trainable = vec![flag; self.initial.len()];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match &self.kind {
            MappingKind::Radial { alpha, center } => {
                if !(*alpha > 0.0) {
                    return bad("radial mapping requires alpha > 0");
                }
                if center.len() != d {
                    return bad("radial center dimension mismatch");
                }
            }
            MappingKind::LocalStretch {
                stretch,
                gate,
                center,
            } => {
                if !(*stretch > 0.0 && *gate > 0.0) {
                    return bad("local stretch requires beta > 0");
                }
                if center.len() != d {
                    return bad("local stretch center dimension mismatch");
                }
            }
            MappingKind::Pwl { logits } => {
                if logits.len() != PWL_SEGMENTS * d {
                    return bad("pwl mapping needs 16 logits per axis");
                }
            }
            MappingKind::Saturating { steepness, .. } => {
                if !steepness.is_finite() {
                    return bad("saturating steepness must be finite");
                }
            }
            MappingKind::Identity | MappingKind::Torus => {}
        }
        if self.trainable.len() != self.params().len() {
            return bad("trainable flags do not match parameter count");
        }
        Ok(())
    }

    /// Declared parameters in a fixed order.
    pub fn params(&self) -> Vec<f64> {
        match &self.kind {
            MappingKind::Identity | MappingKind::Torus => Vec::new(),
            MappingKind::Radial { alpha, .. } => vec![*alpha],
            MappingKind::LocalStretch {
                stretch,
                gate,
                center,
            } => {
                let mut p = vec![*stretch, *gate];
                p.extend_from_slice(center);
                p
            }
            MappingKind::Pwl { logits } => logits.clone(),
            MappingKind::Saturating { steepness, center } => vec![*steepness, *center],
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.params().len());
        match &mut self.kind {
            MappingKind::Identity | MappingKind::Torus => {}
            MappingKind::Radial { alpha, .. } => *alpha = p[0],
            MappingKind::LocalStretch {
                stretch,
                gate,
                center,
            } => {
                *stretch = p[0];
                *gate = p[1];
                center.copy_from_slice(&p[2..]);
            }
            MappingKind::Pwl { logits } => logits.copy_from_slice(p),
            MappingKind::Saturating { steepness, center } => {
                *steepness = p[0];
                *center = p[1];
            }
        }
    }

    /// Count of declared parameters, trainable or not.
    pub fn declared_param_count(&self) -> usize {
        self.initial.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    pub fn trainable_values(&self) -> Vec<f64> {
        self.params()
            .into_iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn set_trainable_values(&mut self, values: &[f64]) {
        let mut p = self.params();
        let mut it = values.iter();
        for (v, &t) in p.iter_mut().zip(&self.trainable) {
            if t {
                *v = *it.next().expect("too few trainable values");
            }
        }
        self.set_params(&p);
    }

    /// Squared deviation of trainable parameters from their initial values.
    pub fn degeneracy_penalty(&self) -> f64 {
        self.params()
            .iter()
            .zip(&self.initial)
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|((p, p0), _)| (p - p0).powi(2))
            .sum()
    }

    /// Gradient of [`degeneracy_penalty`](Self::degeneracy_penalty) over the
    /// trainable parameters.
    pub fn degeneracy_penalty_gradient(&self) -> Vec<f64> {
        self.params()
            .iter()
            .zip(&self.initial)
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|((p, p0), _)| 2.0 * (p - p0))
            .collect()
    }

    /// Maps `x` on derivative channels. `plan` must have `dim()` spatial
    /// variables; if it also has parameter variables they are bound, in
    /// order, to the trainable parameters.
    pub fn eval_channels<'p>(&self, plan: &'p ChannelPlan, x: &[f64]) -> Result<Vec<Taylor<'p>>> {
        let d = self.dim();
        if x.len() != d || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("mapping input {x:?}"),
            });
        }
        debug_assert_eq!(plan.spatial_dim(), d);
        let mut var = d;
        let params: Vec<Taylor<'p>> = self
            .params()
            .iter()
            .zip(&self.trainable)
            .map(|(&v, &t)| {
                if t && plan.param_count() > 0 {
                    var += 1;
                    Taylor::variable(plan, var - 1, v)
                } else {
                    Taylor::constant(plan, v)
                }
            })
            .collect();
        let xs: Vec<Taylor<'p>> = (0..d).map(|i| Taylor::variable(plan, i, x[i])).collect();
        let out = self.eval_kind(plan, &xs, &params);
        for (k, t) in out.iter().enumerate() {
            if t.c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("{} mapping, output axis {k}", self.kind_name()),
                });
            }
        }
        Ok(out)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MappingKind::Identity => "identity",
            MappingKind::Torus => "torus",
            MappingKind::Radial { .. } => "radial",
            MappingKind::LocalStretch { .. } => "local_stretch",
            MappingKind::Pwl { .. } => "pwl",
            MappingKind::Saturating { .. } => "saturating",
        }
    }

    fn normalized<'p>(&self, xs: &[Taylor<'p>], axis: usize) -> Taylor<'p> {
        let w = self.domain.width(axis);
        xs[axis].add_scalar(-self.domain.lo[axis]).scale(1.0 / w)
    }

    fn eval_kind<'p>(
        &self,
        plan: &'p ChannelPlan,
        xs: &[Taylor<'p>],
        params: &[Taylor<'p>],
    ) -> Vec<Taylor<'p>> {
        let d = xs.len();
        match &self.kind {
            MappingKind::Identity => xs.to_vec(),
            MappingKind::Torus => (0..d)
                .map(|i| {
                    let xh = self.normalized(xs, i);
                    let theta = 2.0 * std::f64::consts::PI * xh.value();
                    let angle = theta.sin().atan2(theta.cos()) / (2.0 * std::f64::consts::PI);
                    // the atan2 branch differs from xh by a locally constant shift
                    let mut out = xh.clone();
                    out.c[0] = angle;
                    out
                })
                .collect(),
            MappingKind::Radial { center, .. } => {
                let alpha = &params[0];
                let ys: Vec<Taylor<'p>> = (0..d).map(|i| xs[i].add_scalar(-center[i])).collect();
                let log_norm = alpha.add_scalar(1.0).ln();
                let r2: f64 = ys.iter().map(|y| y.value() * y.value()).sum();
                if r2.sqrt() < RADIAL_ORIGIN_EPS {
                    let slope = alpha.div(&log_norm);
                    return ys.iter().map(|y| y * &slope).collect();
                }
                if d == 1 {
                    let s = ys[0].value().signum();
                    let r = ys[0].scale(s);
                    let g = (alpha * &r).add_scalar(1.0).ln().div(&log_norm);
                    return vec![g.scale(s)];
                }
                let r = ys
                    .iter()
                    .map(|y| y * y)
                    .reduce(|a, b| &a + &b)
                    .expect("nonempty")
                    .sqrt();
                let h = (alpha * &r).add_scalar(1.0).ln().div(&(&log_norm * &r));
                ys.iter().map(|y| y * &h).collect()
            }
            MappingKind::LocalStretch { .. } => {
                let (stretch, gate) = (&params[0], &params[1]);
                let ys: Vec<Taylor<'p>> = (0..d).map(|i| &xs[i] - &params[2 + i]).collect();
                let r2 = ys
                    .iter()
                    .map(|y| y * y)
                    .reduce(|a, b| &a + &b)
                    .expect("nonempty");
                let w = (gate * &r2).scale(-1.0).exp();
                let one_minus_w = w.scale(-1.0).add_scalar(1.0);
                (0..d)
                    .map(|i| {
                        let stretched = (stretch * &ys[i]).tanh();
                        &(&params[2 + i] + &(&one_minus_w * &ys[i])) + &(&w * &stretched)
                    })
                    .collect()
            }
            MappingKind::Saturating { .. } => {
                let (k, c) = (&params[0], &params[1]);
                (0..d)
                    .map(|i| {
                        let xh = self.normalized(xs, i);
                        (k * &(&xh - c)).sigmoid()
                    })
                    .collect()
            }
            MappingKind::Pwl { .. } => (0..d)
                .map(|axis| {
                    let logits = &params[axis * PWL_SEGMENTS..(axis + 1) * PWL_SEGMENTS];
                    let shift = logits
                        .iter()
                        .map(Taylor::value)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<Taylor<'p>> = logits.iter().map(|l| l.add_scalar(-shift).exp()).collect();
                    let total = e.iter().cloned().reduce(|a, b| &a + &b).expect("nonempty");
                    let inv = total.recip();
                    let xh = self.normalized(xs, axis);
                    let k = PWL_SEGMENTS as f64;
                    let seg = ((k * xh.value()).floor().max(0.0) as usize).min(PWL_SEGMENTS - 1);
                    let t = xh.scale(k).add_scalar(-(seg as f64));
                    let mut acc = Taylor::constant(plan, 0.0);
                    for e_j in &e[..seg] {
                        acc = &acc + e_j;
                    }
                    let cum = &acc * &inv;
                    let inc = &e[seg] * &inv;
                    &cum + &(&inc * &t)
                })
                .collect(),
        }
    }

    /// `xi = phi(x)`.
    pub fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let plan = ChannelPlan::spatial(self.dim(), 0);
        Ok(self.eval_channels(&plan, x)?.iter().map(Taylor::value).collect())
    }

    /// `J[k][i] = d xi_k / d x_i`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        let plan = ChannelPlan::spatial(d, 1);
        let out = self.eval_channels(&plan, x)?;
        Ok(out
            .iter()
            .map(|t| (0..d).map(|i| t.partial(&[i])).collect())
            .collect())
    }

    /// `H[k][i][j] = d^2 xi_k / d x_i d x_j`.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let d = self.dim();
        let plan = ChannelPlan::spatial(d, 2);
        let out = self.eval_channels(&plan, x)?;
        Ok(out
            .iter()
            .map(|t| {
                (0..d)
                    .map(|i| (0..d).map(|j| t.partial(&[i, j])).collect())
                    .collect()
            })
            .collect())
    }

    /// PWL segment increments per axis (each row sums to one).
    pub fn pwl_increments(&self) -> Option<Vec<Vec<f64>>> {
        let MappingKind::Pwl { logits } = &self.kind else {
            return None;
        };
        Some(
            logits
                .chunks(PWL_SEGMENTS)
                .map(|l| {
                    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.iter().map(|v| v / s).collect()
                })
                .collect(),
        )
    }
}
