use rand::distributions::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lo, hi]` per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// Uniform point in the open box.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let u: f64 = Open01.sample(rng);
                self.lo[i] + u * self.width(i)
            })
            .collect()
    }

    /// Uniform point on the boundary, faces weighted by their measure.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        if d == 1 {
            return if rng.gen::<bool>() {
                vec![self.hi[0]]
            } else {
                vec![self.lo[0]]
            };
        }
        let face_measure: Vec<f64> = (0..d)
            .map(|fixed| (0..d).filter(|&i| i != fixed).map(|i| self.width(i)).product())
            .collect();
        let total: f64 = 2.0 * face_measure.iter().sum::<f64>();
        let mut pick = rng.gen::<f64>() * total;
        let mut axis = d - 1;
        let mut upper = true;
        'outer: for (a, &m) in face_measure.iter().enumerate() {
            for side in [false, true] {
                if pick < m {
                    axis = a;
                    upper = side;
                    break 'outer;
                }
                pick -= m;
            }
        }
        let mut x = self.sample_interior(rng);
        x[axis] = if upper { self.hi[axis] } else { self.lo[axis] };
        x
    }
}
