//! Scalar arithmetic on derivative channels.
//!
//! [`Taylor`] carries a value together with every partial derivative listed
//! by its [`ChannelPlan`]. Mappings and manufactured solutions are written
//! once in terms of these operations and yield exact Jacobians, Hessians and
//! parameter sensitivities.

use std::ops::{Add, Mul, Neg, Sub};

use crate::plan::ChannelPlan;

#[derive(Clone, Debug)]
pub struct Taylor<'p> {
    plan: &'p ChannelPlan,
    pub c: Vec<f64>,
}

impl<'p> Taylor<'p> {
    pub fn constant(plan: &'p ChannelPlan, value: f64) -> Self {
        let mut c = vec![0.0; plan.len()];
        c[0] = value;
        Self { plan, c }
    }

    /// Independent variable `var` (spatial or parameter) at `value`.
    pub fn variable(plan: &'p ChannelPlan, var: usize, value: f64) -> Self {
        let mut t = Self::constant(plan, value);
        if let Some(ch) = plan.channel(&[var]) {
            t.c[ch] = 1.0;
        }
        t
    }

    pub fn from_channels(plan: &'p ChannelPlan, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), plan.len());
        Self { plan, c }
    }

    pub fn plan(&self) -> &'p ChannelPlan {
        self.plan
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative along the given variables (any order).
    pub fn partial(&self, vars: &[usize]) -> f64 {
        self.plan.channel(vars).map_or(0.0, |ch| self.c[ch])
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            plan: self.plan,
            c: self.c.iter().map(|v| v * k).collect(),
        }
    }

    pub fn add_scalar(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.c[0] += k;
        out
    }

    /// Applies a univariate function given its derivatives at the value.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let mut out = vec![0.0; self.c.len()];
        self.plan.compose_into(&self.c, derivs, &mut out);
        Self { plan: self.plan, c: out }
    }

    fn compose_with(&self, f: impl Fn(f64, usize) -> Vec<f64>) -> Self {
        let derivs = f(self.value(), self.plan.max_len());
        self.compose(&derivs)
    }

    pub fn exp(&self) -> Self {
        self.compose_with(|v, n| vec![v.exp(); n + 1])
    }

    pub fn ln(&self) -> Self {
        self.compose_with(|v, n| {
            let mut d = vec![v.ln()];
            let mut fact = 1.0;
            for k in 1..=n {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                d.push(sign * fact / v.powi(k as i32));
                fact *= k as f64;
            }
            d
        })
    }

    pub fn powf(&self, p: f64) -> Self {
        self.compose_with(|v, n| {
            let mut d = Vec::with_capacity(n + 1);
            let mut coeff = 1.0;
            for k in 0..=n {
                d.push(coeff * v.powf(p - k as f64));
                coeff *= p - k as f64;
            }
            d
        })
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        self.powf(-1.0)
    }

    pub fn sin(&self) -> Self {
        self.compose_with(|v, n| {
            let (s, c) = v.sin_cos();
            (0..=n).map(|k| [s, c, -s, -c][k % 4]).collect()
        })
    }

    pub fn cos(&self) -> Self {
        self.compose_with(|v, n| {
            let (s, c) = v.sin_cos();
            (0..=n).map(|k| [c, -s, -c, s][k % 4]).collect()
        })
    }

    pub fn tanh(&self) -> Self {
        self.compose_with(|v, n| crate::plan::tanh_derivs(v, 5)[..=n].to_vec())
    }

    pub fn sigmoid(&self) -> Self {
        self.compose_with(|v, n| {
            let s = 1.0 / (1.0 + (-v).exp());
            let s1 = s * (1.0 - s);
            let all = [
                s,
                s1,
                s1 * (1.0 - 2.0 * s),
                s1 * (1.0 - 6.0 * s + 6.0 * s * s),
                s1 * (1.0 - 14.0 * s + 36.0 * s * s - 24.0 * s * s * s),
            ];
            all[..=n].to_vec()
        })
    }

    pub fn div(&self, other: &Self) -> Self {
        self * &other.recip()
    }
}

impl<'p> Add for &Taylor<'p> {
    type Output = Taylor<'p>;
    fn add(self, rhs: Self) -> Taylor<'p> {
        Taylor {
            plan: self.plan,
            c: self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'p> Sub for &Taylor<'p> {
    type Output = Taylor<'p>;
    fn sub(self, rhs: Self) -> Taylor<'p> {
        Taylor {
            plan: self.plan,
            c: self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'p> Mul for &Taylor<'p> {
    type Output = Taylor<'p>;
    fn mul(self, rhs: Self) -> Taylor<'p> {
        let mut out = vec![0.0; self.c.len()];
        self.plan.product_into(&self.c, &rhs.c, &mut out);
        Taylor { plan: self.plan, c: out }
    }
}

impl<'p> Neg for &Taylor<'p> {
    type Output = Taylor<'p>;
    fn neg(self) -> Taylor<'p> {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl<'p> $tr for Taylor<'p> {
            type Output = Taylor<'p>;
            fn $m(self, rhs: Self) -> Taylor<'p> {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
