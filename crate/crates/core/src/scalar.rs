//! Number types for writing PDE operators once and evaluating them as plain
//! values, with channel tangents, or with a first spatial derivative on top.

use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn val(&self) -> f64;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn val(&self) -> f64 {
        *self
    }
}

/// Forward-mode dual number with a dense tangent. An empty tangent is zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: Vec<f64>,
}

impl Dual {
    /// Seed `v` as the `index`-th of `n` independent inputs.
    pub fn seed(v: f64, index: usize, n: usize) -> Self {
        let mut d = vec![0.0; n];
        d[index] = 1.0;
        Self { v, d }
    }

    fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| f(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
            .collect()
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            v: self.v + rhs.v,
            d: Dual::zip(&self.d, &rhs.d, |a, b| a + b),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            v: self.v - rhs.v,
            d: Dual::zip(&self.d, &rhs.d, |a, b| a - b),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let (av, bv) = (self.v, rhs.v);
        Dual {
            v: av * bv,
            d: Dual::zip(&self.d, &rhs.d, |a, b| a * bv + av * b),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scale(-1.0)
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual { v, d: Vec::new() }
    }
    fn scale(&self, k: f64) -> Self {
        Dual {
            v: self.v * k,
            d: self.d.iter().map(|x| x * k).collect(),
        }
    }
    fn val(&self) -> f64 {
        self.v
    }
}

/// A value with its first spatial gradient; an empty gradient is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Grad1<T> {
    pub v: T,
    pub g: Vec<T>,
}

impl<T: Scalar> Grad1<T> {
    fn zip(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| {
                f(
                    a.get(i).cloned().unwrap_or_else(|| T::cst(0.0)),
                    b.get(i).cloned().unwrap_or_else(|| T::cst(0.0)),
                )
            })
            .collect()
    }
}

impl<T: Scalar> Add for Grad1<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Grad1 {
            v: self.v + rhs.v,
            g: Self::zip(&self.g, &rhs.g, |a, b| a + b),
        }
    }
}

impl<T: Scalar> Sub for Grad1<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Grad1 {
            v: self.v - rhs.v,
            g: Self::zip(&self.g, &rhs.g, |a, b| a - b),
        }
    }
}

impl<T: Scalar> Mul for Grad1<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (av, bv) = (self.v.clone(), rhs.v.clone());
        Grad1 {
            v: self.v * rhs.v,
            g: Self::zip(&self.g, &rhs.g, |a, b| a * bv.clone() + av.clone() * b),
        }
    }
}

impl<T: Scalar> Neg for Grad1<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<T: Scalar> Scalar for Grad1<T> {
    fn cst(v: f64) -> Self {
        Grad1 {
            v: T::cst(v),
            g: Vec::new(),
        }
    }
    fn scale(&self, k: f64) -> Self {
        Grad1 {
            v: self.v.scale(k),
            g: self.g.iter().map(|x| x.scale(k)).collect(),
        }
    }
    fn val(&self) -> f64 {
        self.v.val()
    }
}
