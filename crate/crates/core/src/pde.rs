//! Manufactured-solution benchmarks: domains, operators, exact fields,
//! source terms and residuals.
//!
//! Operators are written once over [`Scalar`] and receive the field through
//! an accessor `u(component, axes)` returning the partial derivative of that
//! component along `axes`. Source terms are obtained by applying the same
//! operator to the exact field's derivative channels.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainBox;
use crate::error::{Error, Result};
use crate::model::{plan, Model};
use crate::plan::ChannelPlan;
use crate::scalar::{Grad1, Scalar};
use crate::taylor::Taylor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkName {
    Burgers1d,
    Convdiff1d,
    Helmholtz1d,
    Convdiff2d,
    Ns2d,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 5] = [
        BenchmarkName::Burgers1d,
        BenchmarkName::Convdiff1d,
        BenchmarkName::Helmholtz1d,
        BenchmarkName::Convdiff2d,
        BenchmarkName::Ns2d,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkName::Burgers1d => "burgers1d",
            BenchmarkName::Convdiff1d => "convdiff1d",
            BenchmarkName::Helmholtz1d => "helmholtz1d",
            BenchmarkName::Convdiff2d => "convdiff2d",
            BenchmarkName::Ns2d => "ns2d",
        }
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark '{s}'")))
    }
}

impl std::fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const BURGERS_NU: f64 = 0.1;
pub const CONVDIFF1D_NU: f64 = 1e-3;
pub const CONVDIFF1D_A: f64 = 1.0;
pub const HELMHOLTZ_K: f64 = 10.0;
pub const HELMHOLTZ_M: f64 = 5.0;
pub const CONVDIFF2D_EPS: f64 = 0.01;
pub const CONVDIFF2D_B: [f64; 2] = [1.0, 1.0];
pub const CONVDIFF2D_LAYER_A: f64 = 0.8;
pub const CONVDIFF2D_LAYER_EPS: f64 = 0.01;
pub const NS_NU: f64 = 0.01;
pub const NS_LAYER_A: f64 = 0.3;
pub const NS_LAYER_EPS: f64 = 0.01;
pub const NS_PRESSURE_B: f64 = 0.5;

/// Boundary points per step on two-dimensional domains.
pub const BOUNDARY_POINTS_2D: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct PdeBenchmark {
    pub name: BenchmarkName,
    pub domain: DomainBox,
    pub operator_order: usize,
}

impl PdeBenchmark {
    pub fn new(name: BenchmarkName) -> Self {
        let dim = match name {
            BenchmarkName::Convdiff2d | BenchmarkName::Ns2d => 2,
            _ => 1,
        };
        Self {
            name,
            domain: DomainBox::unit(dim),
            operator_order: 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Network outputs: `u`, or `(u, v, p)` for Navier-Stokes.
    pub fn field_components(&self) -> usize {
        if self.name == BenchmarkName::Ns2d {
            3
        } else {
            1
        }
    }

    pub fn residual_components(&self) -> usize {
        self.field_components()
    }

    /// Components constrained by Dirichlet data (velocity only for NS).
    pub fn boundary_components(&self) -> &'static [usize] {
        if self.name == BenchmarkName::Ns2d {
            &[0, 1]
        } else {
            &[0]
        }
    }

    /// Point where the NS pressure gauge is pinned.
    pub fn pressure_pin(&self) -> Option<Vec<f64>> {
        (self.name == BenchmarkName::Ns2d).then(|| self.domain.lo.clone())
    }

    /// Exact field components on derivative channels.
    pub fn exact_taylor<'p>(&self, plan: &'p ChannelPlan, x: &[f64]) -> Vec<Taylor<'p>> {
        let v = |i: usize| Taylor::variable(plan, i, x[i]);
        match self.name {
            BenchmarkName::Burgers1d => {
                let x = v(0);
                let base = x.scale(2.0 * PI).sin();
                let fine = x.scale(16.0 * PI).sin().scale(0.1);
                vec![&base + &fine]
            }
            BenchmarkName::Convdiff1d => {
                let x = v(0);
                let layer = x.scale(-CONVDIFF1D_A / CONVDIFF1D_NU).exp();
                vec![&x.scale(PI).sin() + &layer]
            }
            BenchmarkName::Helmholtz1d => vec![v(0).scale(2.0 * PI * HELMHOLTZ_M).sin()],
            BenchmarkName::Convdiff2d => {
                let (x, y) = (v(0), v(1));
                let smooth = &x.scale(PI).sin() * &y.scale(PI).sin();
                let layer = x
                    .scale(1.0 / CONVDIFF2D_LAYER_EPS)
                    .add_scalar(-1.0 / CONVDIFF2D_LAYER_EPS)
                    .exp()
                    .scale(CONVDIFF2D_LAYER_A);
                vec![&smooth + &layer]
            }
            BenchmarkName::Ns2d => {
                let (x, y) = (v(0), v(1));
                let e = x
                    .scale(1.0 / NS_LAYER_EPS)
                    .add_scalar(-1.0 / NS_LAYER_EPS)
                    .exp();
                let u = &y.scale(PI).sin() * &e.scale(NS_LAYER_A).add_scalar(1.0);
                let vv = (&e * &y.scale(PI).cos().add_scalar(-1.0)).scale(NS_LAYER_A / (NS_LAYER_EPS * PI));
                let p = (&x.scale(2.0 * PI).sin() * &y.scale(2.0 * PI).sin()).scale(NS_PRESSURE_B);
                vec![u, vv, p]
            }
        }
    }

    pub fn manufactured_solution(&self, x: &[f64]) -> Vec<f64> {
        let plan = plan(self.dim(), 0, 0);
        self.exact_taylor(&plan, x).iter().map(Taylor::value).collect()
    }

    /// Differential operator applied to a field given by an accessor.
    pub fn apply_operator<T: Scalar>(&self, u: &dyn Fn(usize, &[usize]) -> T) -> Vec<T> {
        match self.name {
            BenchmarkName::Burgers1d => {
                vec![u(0, &[0, 0]).scale(-BURGERS_NU) + u(0, &[]) * u(0, &[0])]
            }
            BenchmarkName::Convdiff1d => {
                vec![u(0, &[0, 0]).scale(-CONVDIFF1D_NU) + u(0, &[0]).scale(CONVDIFF1D_A)]
            }
            BenchmarkName::Helmholtz1d => {
                vec![u(0, &[0, 0]) + u(0, &[]).scale(HELMHOLTZ_K * HELMHOLTZ_K)]
            }
            BenchmarkName::Convdiff2d => {
                let lap = u(0, &[0, 0]) + u(0, &[1, 1]);
                vec![
                    lap.scale(-CONVDIFF2D_EPS)
                        + u(0, &[0]).scale(CONVDIFF2D_B[0])
                        + u(0, &[1]).scale(CONVDIFF2D_B[1]),
                ]
            }
            BenchmarkName::Ns2d => {
                let (uu, vv) = (u(0, &[]), u(1, &[]));
                let momentum = |c: usize, axis: usize| {
                    uu.clone() * u(c, &[0]) + vv.clone() * u(c, &[1]) + u(2, &[axis])
                        - (u(c, &[0, 0]) + u(c, &[1, 1])).scale(NS_NU)
                };
                vec![momentum(0, 0), momentum(1, 1), u(0, &[0]) + u(1, &[1])]
            }
        }
    }

    /// `f = N[u*]` at `x`, one entry per residual component.
    pub fn source_term(&self, x: &[f64]) -> Vec<f64> {
        let plan = plan(self.dim(), 0, 2);
        let exact = self.exact_taylor(&plan, x);
        self.apply_operator::<f64>(&|k, axes| exact[k].partial(axes))
    }

    /// `f` and its spatial gradient at `x`.
    pub fn source_term_with_gradient(&self, x: &[f64]) -> Vec<Grad1<f64>> {
        let d = self.dim();
        let plan = plan(d, 0, 3);
        let exact = self.exact_taylor(&plan, x);
        self.apply_operator::<Grad1<f64>>(&|k, axes| {
            let mut g = Vec::with_capacity(d);
            for i in 0..d {
                let mut a = axes.to_vec();
                a.push(i);
                g.push(exact[k].partial(&a));
            }
            Grad1 {
                v: exact[k].partial(axes),
                g,
            }
        })
    }

    /// `N[u] - f` from a field's channels `[comp][channel]` laid out by `plan`.
    pub fn residual_from_channels(&self, plan: &ChannelPlan, ch: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let n = self.apply_operator::<f64>(&|k, axes| plan.channel(axes).map_or(0.0, |c| ch[k][c]));
        let f = self.source_term(x);
        n.iter().zip(&f).map(|(a, b)| a - b).collect()
    }

    /// `N[u_theta] - f` at `x`.
    pub fn residual(&self, model: &dyn FieldModel, x: &[f64]) -> Result<Vec<f64>> {
        let plan = plan(self.dim(), 0, 2);
        let ch = model.point_channels(x, 2)?;
        Ok(self.residual_from_channels(&plan, &ch, x))
    }

    /// `u_theta - u*` on the Dirichlet components at a boundary point.
    pub fn boundary_residual(&self, model: &dyn FieldModel, x: &[f64]) -> Result<Vec<f64>> {
        let ch = model.point_channels(x, 0)?;
        let exact = self.manufactured_solution(x);
        Ok(self
            .boundary_components()
            .iter()
            .map(|&k| ch[k][0] - exact[k])
            .collect())
    }

    /// Boundary batch: both endpoints in 1D, `BOUNDARY_POINTS_2D` uniform
    /// perimeter points otherwise.
    pub fn boundary_points<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        if self.dim() == 1 {
            return vec![self.domain.lo.clone(), self.domain.hi.clone()];
        }
        (0..BOUNDARY_POINTS_2D)
            .map(|_| self.domain.sample_boundary(rng))
            .collect()
    }
}

/// Anything that yields output channels at a point.
pub trait FieldModel {
    /// `[comp][channel]` on the spatial plan of the given order.
    fn point_channels(&self, x: &[f64], order: usize) -> Result<Vec<Vec<f64>>>;
}

impl FieldModel for Model {
    fn point_channels(&self, x: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
        Ok(self.eval_chunk(&[x.to_vec()], order, false)?.point(0))
    }
}

/// The manufactured solution itself, as a model.
pub struct ExactField<'a>(pub &'a PdeBenchmark);

impl FieldModel for ExactField<'_> {
    fn point_channels(&self, x: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
        let plan = plan(self.0.dim(), 0, order);
        Ok(self.0.exact_taylor(&plan, x).into_iter().map(|t| t.c).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplificationReport {
    pub epsilon: f64,
    pub grid_points: usize,
    pub max_fine_uxx: f64,
    pub max_smooth_uxx: f64,
    pub ratio: f64,
}

/// Second-derivative amplitude of `sin(2 pi x / eps)` relative to
/// `sin(2 pi x)` on a uniform grid of `[0, 1]`.
pub fn amplification_probe(epsilon: f64, grid_points: usize) -> Result<AmplificationReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument("epsilon must lie in (0, 1]".into()));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let per_wavelength = epsilon * (grid_points - 1) as f64;
    if per_wavelength < 4.0 {
        return Err(Error::GridTooCoarse {
            points_per_wavelength: per_wavelength,
        });
    }
    let plan = plan(1, 0, 2);
    let (mut fine, mut smooth) = (0.0f64, 0.0f64);
    for i in 0..grid_points {
        let x = Taylor::variable(&plan, 0, i as f64 / (grid_points - 1) as f64);
        smooth = smooth.max(x.scale(2.0 * PI).sin().partial(&[0, 0]).abs());
        fine = fine.max(x.scale(2.0 * PI / epsilon).sin().partial(&[0, 0]).abs());
    }
    Ok(AmplificationReport {
        epsilon,
        grid_points,
        max_fine_uxx: fine,
        max_smooth_uxx: smooth,
        ratio: fine / smooth,
    })
}
