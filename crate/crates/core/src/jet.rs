//! Point values bundled with their input gradient and Hessian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::ChannelPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `d x d`, symmetric.
    pub hess: Vec<Vec<f64>>,
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Reads a jet from channel values laid out by `plan` (order >= 2).
    pub fn from_channels(plan: &ChannelPlan, c: &[f64]) -> Self {
        let d = plan.spatial_dim();
        let at = |vars: &[usize]| plan.channel(vars).map_or(0.0, |ch| c[ch]);
        Jet {
            value: c[0],
            grad: (0..d).map(|i| at(&[i])).collect(),
            hess: (0..d)
                .map(|i| (0..d).map(|j| at(&[i, j])).collect())
                .collect(),
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                m = m.max((self.hess[i][j] - self.hess[j][i]).abs());
            }
        }
        m
    }
}

/// Pulls a jet taken in mapped coordinates `xi` back to physical `x`:
/// `grad_x = J^T grad_xi`, `hess_x = J^T hess_xi J + sum_k grad_xi[k] H_k`
/// with `jac[k][i] = d xi_k / d x_i` and `map_hess[k][i][j]`.
pub fn pull_back(xi_jet: &Jet, jac: &[Vec<f64>], map_hess: &[Vec<Vec<f64>>]) -> Jet {
    let d = jac.first().map_or(0, Vec::len);
    let m = xi_jet.dim();
    let grad = (0..d)
        .map(|i| (0..m).map(|k| jac[k][i] * xi_jet.grad[k]).sum())
        .collect();
    let hess = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut v = 0.0;
                    for k in 0..m {
                        for l in 0..m {
                            v += jac[k][i] * xi_jet.hess[k][l] * jac[l][j];
                        }
                        v += xi_jet.grad[k] * map_hess[k][i][j];
                    }
                    v
                })
                .collect()
        })
        .collect();
    Jet {
        value: xi_jet.value,
        grad,
        hess,
    }
}

/// Central-difference estimate of value, gradient and Hessian.
pub fn finite_difference_oracle<F>(field: F, point: &[f64], step: f64) -> Result<Jet>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let d = point.len();
    let eval = |x: &[f64]| -> Result<f64> {
        let v = field(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                location: format!("field at {x:?}"),
            })
        }
    };
    let shifted = |moves: &[(usize, f64)]| {
        let mut x = point.to_vec();
        for &(i, h) in moves {
            x[i] += h;
        }
        x
    };
    let f0 = eval(point)?;
    let mut grad = vec![0.0; d];
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        let fp = eval(&shifted(&[(i, step)]))?;
        let fm = eval(&shifted(&[(i, -step)]))?;
        grad[i] = (fp - fm) / (2.0 * step);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let fpp = eval(&shifted(&[(i, step), (j, step)]))?;
            let fpm = eval(&shifted(&[(i, step), (j, -step)]))?;
            let fmp = eval(&shifted(&[(i, -step), (j, step)]))?;
            let fmm = eval(&shifted(&[(i, -step), (j, -step)]))?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(Jet {
        value: f0,
        grad,
        hess,
    })
}

/// Richardson extrapolation of [`finite_difference_oracle`] over steps `h`
/// and `h / 2`, cancelling the leading `h^2` error term.
pub fn richardson_oracle<F>(field: F, point: &[f64], step: f64) -> Result<Jet>
where
    F: Fn(&[f64]) -> f64,
{
    let coarse = finite_difference_oracle(&field, point, step)?;
    let fine = finite_difference_oracle(&field, point, 0.5 * step)?;
    let ex = |c: f64, f: f64| (4.0 * f - c) / 3.0;
    Ok(Jet {
        value: fine.value,
        grad: coarse.grad.iter().zip(&fine.grad).map(|(&c, &f)| ex(c, f)).collect(),
        hess: coarse
            .hess
            .iter()
            .zip(&fine.hess)
            .map(|(rc, rf)| rc.iter().zip(rf).map(|(&c, &f)| ex(c, f)).collect())
            .collect(),
    })
}
