//! Minimal dense linear algebra for the model fits.
//!
//! Everything the classifiers need reduces to symmetric positive-definite
//! solves (normal equations, Newton steps, Gaussian Mahalanobis terms), so a
//! Cholesky factorization plus a handful of matrix helpers covers the crate.
//! Dimensions stay small (a few hundred at most), dense row-major storage is
//! fine.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn add_diag(&mut self, v: f64) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            self.add_at(i, i, v);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(self.row(r), x))
            .collect()
    }

    /// `Aᵀ x` for a tall design matrix without materializing the transpose.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * xr;
            }
        }
        out
    }

    /// Gram matrix `AᵀA` of a tall `n x p` design matrix.
    pub fn gram(&self) -> Mat {
        self.gram_weighted_opt(None)
    }

    /// Weighted Gram matrix `Aᵀ diag(w) A`.
    pub fn gram_weighted(&self, w: &[f64]) -> Mat {
        assert_eq!(w.len(), self.rows);
        self.gram_weighted_opt(Some(w))
    }

    fn gram_weighted_opt(&self, w: Option<&[f64]>) -> Mat {
        let p = self.cols;
        let mut g = Mat::zeros(p, p);
        for r in 0..self.rows {
            let row = self.row(r);
            let wr = w.map_or(1.0, |w| w[r]);
            for a in 0..p {
                let s = wr * row[a];
                if s == 0.0 {
                    continue;
                }
                for b in a..p {
                    g.add_at(a, b, s * row[b]);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                let v = g.at(b, a);
                g.set(a, b, v);
            }
        }
        g
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when the matrix is not positive definite.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.at(j, j));
            }
        }
    }
    Some(l)
}

/// Solve `L z = b` (forward substitution).
pub fn forward_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.at(i, k) * z[k];
        }
        z[i] = s / l.at(i, i);
    }
    z
}

/// Solve `A x = b` given the Cholesky factor `L` of `A`.
pub fn chol_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let z = forward_solve(l, b);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.at(k, i) * x[k];
        }
        x[i] = s / l.at(i, i);
    }
    x
}

/// `log det A` from the Cholesky factor of `A`.
pub fn chol_logdet(l: &Mat) -> f64 {
    (0..l.rows()).map(|i| l.at(i, i).ln()).sum::<f64>() * 2.0
}

/// Inverse of `A` from its Cholesky factor.
pub fn chol_inverse(l: &Mat) -> Mat {
    let n = l.rows();
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        let col = chol_solve(l, &e);
        e[c] = 0.0;
        for r in 0..n {
            inv.set(r, c, col[r]);
        }
    }
    inv
}

/// Solve a symmetric positive-definite system directly.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a).map(|l| chol_solve(&l, b))
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form(m: &Mat, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    dot(v, &mv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_3x3() -> Mat {
        Mat::from_vec(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd_3x3();
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += l.at(i, k) * l.at(j, k);
                }
                assert!((s - a.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_matches_expected() {
        let a = spd_3x3();
        let x_true = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn non_spd_rejected() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn inverse_and_logdet() {
        let a = spd_3x3();
        let l = cholesky(&a).unwrap();
        let inv = chol_inverse(&l);
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let col = a.matvec(&(0..3).map(|r| inv.at(r, i)).collect::<Vec<_>>());
            for (c, ei) in col.iter().zip(&e) {
                assert!((c - ei).abs() < 1e-12);
            }
        }
        // det by cofactor expansion for the fixed 3x3
        let det: f64 = 4.0 * (3.0 * 2.0 - 0.2 * 0.2) - 1.0 * (1.0 * 2.0 - 0.2 * 0.5)
            + 0.5 * (1.0 * 0.2 - 3.0 * 0.5);
        assert!((chol_logdet(&l) - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn gram_weighted_matches_naive() {
        let x = Mat::from_vec(4, 2, vec![1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 0.0, -2.0]);
        let w = vec![1.0, 0.5, 2.0, 0.25];
        let g = x.gram_weighted(&w);
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for r in 0..4 {
                    s += w[r] * x.at(r, a) * x.at(r, b);
                }
                assert!((g.at(a, b) - s).abs() < 1e-12);
            }
        }
    }
}
