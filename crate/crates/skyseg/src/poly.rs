//! Explicit polynomial feature map.
//!
//! Classifiers here train on an explicit finite map instead of an `N x N`
//! kernel matrix. The map's monomial coefficients are chosen so that the dot
//! product in the mapped space reproduces the inhomogeneous polynomial
//! kernel:
//!
//! ```text
//! phi(x) . phi(x') = (1 + x . x')^n
//! ```
//!
//! For order 1 the map is `[1, x_1, .., x_d]`; for order 2 it appends the
//! squares and the sqrt(2)-scaled pairwise products. The output dimension is
//! the monomial count `C(n + d, n)`. The constant monomial doubles as the
//! bias, so trained weight vectors need no separate intercept.

use crate::error::{Error, Result};
use crate::features::SampleSet;
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyMap {
    input_dim: usize,
    order: u32,
}

impl PolyMap {
    pub fn new(input_dim: usize, order: u32) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!(
                "polynomial order must be 1 or 2, got {order}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        Ok(Self { input_dim, order })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn output_dim(&self) -> usize {
        let d = self.input_dim;
        match self.order {
            1 => 1 + d,
            2 => (d + 1) * (d + 2) / 2,
            _ => unreachable!(),
        }
    }

    /// Expands `x` into `out` (length `output_dim`). Layout: constant, the
    /// sqrt(2)-scaled linear terms (order 2) or plain linear terms (order 1),
    /// then squares and sqrt(2)-scaled cross products in lexicographic order.
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        assert_eq!(out.len(), self.output_dim(), "output dimension mismatch");
        let sqrt2 = std::f64::consts::SQRT_2;
        out[0] = 1.0;
        match self.order {
            1 => out[1..].copy_from_slice(x),
            2 => {
                let d = self.input_dim;
                for (o, v) in out[1..1 + d].iter_mut().zip(x) {
                    *o = sqrt2 * v;
                }
                for (o, v) in out[1 + d..1 + 2 * d].iter_mut().zip(x) {
                    *o = v * v;
                }
                let mut k = 1 + 2 * d;
                for a in 0..d {
                    for b in a + 1..d {
                        out[k] = sqrt2 * x[a] * x[b];
                        k += 1;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.expand_into(x, &mut out);
        out
    }

    /// Expands a whole sample set into an `n x output_dim` design matrix.
    pub fn design_matrix(&self, samples: &SampleSet) -> Mat {
        assert_eq!(samples.dim, self.input_dim, "sample dimension mismatch");
        let n = samples.len();
        let p = self.output_dim();
        let mut design = Mat::zeros(n, p);
        for i in 0..n {
            self.expand_into(samples.vector(i), design.row_mut(i));
        }
        design
    }
}
