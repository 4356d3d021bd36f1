//! Adam and L-BFGS with a strong Wolfe line search, over flat parameter
//! vectors.

use crate::error::Result;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `x` with gradient `g`.
    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - ADAM_BETA1.powi(self.t);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            x[i] -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub lr: f64,
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            lr: 1.0,
            history: 50,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-10,
            max_line_evals: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStop {
    MaxIterations,
    GradientTolerance,
    LineSearchFailed,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, kept
/// inside the bracket away from its ends.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let sq = d1 * d1 - ga * gb;
    let t = if sq >= 0.0 {
        let d2 = (b - a).signum() * sq.sqrt();
        b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
    } else {
        0.5 * (a + b)
    };
    let margin = 0.1 * (hi - lo);
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        0.5 * (lo + hi)
    } else {
        t
    }
}

struct LinePoint {
    t: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

/// Strong Wolfe line search along `dir` from `x` (`f0`, directional
/// derivative `d0 < 0`). Returns the accepted point or `None`.
fn strong_wolfe<F>(f: &mut F, x: &[f64], f0: f64, d0: f64, dir: &[f64], t0: f64, opts: &LbfgsOptions) -> Result<Option<(Vec<f64>, LinePoint)>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut evals = 0;
    let mut probe = |t: f64, evals: &mut usize| -> Result<(Vec<f64>, LinePoint)> {
        *evals += 1;
        let xt: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        let (ft, gt) = f(&xt)?;
        let dg = dot(&gt, dir);
        Ok((xt, LinePoint { t, f: ft, g: gt, dg }))
    };
    let mut prev = LinePoint {
        t: 0.0,
        f: f0,
        g: Vec::new(),
        dg: d0,
    };
    let mut t = t0;
    let (mut lo, mut hi): (LinePoint, LinePoint);
    loop {
        let (xt, cur) = probe(t, &mut evals)?;
        if !cur.f.is_finite() || cur.f > f0 + opts.c1 * t * d0 || (evals > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.dg.abs() <= -opts.c2 * d0 {
            return Ok(Some((xt, cur)));
        }
        if cur.dg >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if evals >= opts.max_line_evals {
            return Ok(None);
        }
        prev = cur;
        t *= 2.0;
    }
    // Zoom: `lo` satisfies sufficient decrease, the minimizer lies between.
    while evals < opts.max_line_evals {
        let t = if hi.f.is_finite() {
            cubic_min(lo.t, lo.f, lo.dg, hi.t, hi.f, hi.dg)
        } else {
            0.5 * (lo.t + hi.t)
        };
        if (hi.t - lo.t).abs() < 1e-14 * lo.t.abs().max(1e-14) {
            break;
        }
        let (xt, cur) = probe(t, &mut evals)?;
        if !cur.f.is_finite() || cur.f > f0 + opts.c1 * t * d0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dg.abs() <= -opts.c2 * d0 {
                return Ok(Some((xt, cur)));
            }
            if cur.dg * (hi.t - lo.t) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(None)
}

/// Result of an L-BFGS run.
#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub iterations: usize,
    pub stop: LbfgsStop,
    pub loss: f64,
}

/// Minimizes `f` from `x` for at most `max_iter` iterations. `on_iter` sees
/// the iteration index, the accepted loss and the new point.
pub fn lbfgs<F, C>(f: &mut F, x: &mut Vec<f64>, max_iter: usize, opts: &LbfgsOptions, mut on_iter: C) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let (mut fx, mut g) = f(x)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    for it in 0..max_iter {
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm < opts.grad_tol {
            return Ok(LbfgsOutcome {
                iterations: it,
                stop: LbfgsStop::GradientTolerance,
                loss: fx,
            });
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..s_hist.len() {
            let b = rho[i] * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alpha[i] - b) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &dir);
        }
        let t0 = if it == 0 {
            let l1: f64 = g.iter().map(|v| v.abs()).sum();
            (1.0f64).min(1.0 / l1) * opts.lr
        } else {
            opts.lr
        };
        let Some((xn, pt)) = strong_wolfe(f, x, fx, d0, &dir, t0, opts)? else {
            return Ok(LbfgsOutcome {
                iterations: it,
                stop: LbfgsStop::LineSearchFailed,
                loss: fx,
            });
        };
        let s: Vec<f64> = xn.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if s_hist.len() == opts.history {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho.push(1.0 / sy);
        }
        *x = xn;
        fx = pt.f;
        g = pt.g;
        on_iter(it, fx, x)?;
    }
    Ok(LbfgsOutcome {
        iterations: max_iter,
        stop: LbfgsStop::MaxIterations,
        loss: fx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_fast() {
        let mut f = |x: &[f64]| Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let mut x = vec![0.0];
        let out = lbfgs(&mut f, &mut x, 5, &LbfgsOptions::default(), |_, _, _| Ok(())).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-10, "{x:?} {out:?}");
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let mut x = vec![-1.2, 1.0];
        let mut f = rosenbrock;
        let out = lbfgs(&mut f, &mut x, 100, &LbfgsOptions::default(), |_, _, _| Ok(())).unwrap();
        assert!(out.loss < 1e-8, "{out:?}");
    }

    #[test]
    fn accepted_steps_never_increase_loss() {
        let mut x = vec![-1.2, 1.0];
        let mut f = rosenbrock;
        let mut last = rosenbrock(&x).unwrap().0;
        lbfgs(&mut f, &mut x, 60, &LbfgsOptions::default(), |_, fx, _| {
            assert!(fx <= last);
            last = fx;
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut x = vec![1.0, -1.0];
        adam.step(&mut x, &[2.0, -3.0]);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 0.9).abs() < 1e-6);
    }
}
