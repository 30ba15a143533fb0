//! Dense complex linear algebra for the per-node spectral systems.
//!
//! The systems are tiny (2n for the whole-line problem, 2(n+2) with
//! boundaries — at most a few dozen rows), and every contour node solves an
//! independent one, so a plain LU with partial pivoting beats any external
//! solver: no allocation churn across right-hand sides, exact control over
//! the determinant bookkeeping, and a cheap residual check.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// `A x` for a residual check.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &xj) in x.iter().enumerate() {
                acc += self.get(i, j) * xj;
            }
            y[i] = acc;
        }
        y
    }

    /// Largest entry magnitude, used for scaling singularity thresholds.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting plus the permutation sign, kept so
/// the determinant comes out of the same factorization that solves.
#[derive(Debug)]
pub struct LuFactors {
    lu: CMatrix,
    pivots: Vec<usize>,
    sign: f64,
}

/// Factor `a` in place (on a copy) with partial pivoting.
///
/// `kappa` only labels the [`Error::SingularNode`] diagnostic; the caller
/// knows which contour node it was assembling.
pub fn lu_factor(a: &CMatrix, kappa: Complex64) -> Result<LuFactors> {
    let n = a.n;
    let mut lu = a.clone();
    let mut pivots = vec![0usize; n];
    let mut sign = 1.0;
    let scale = lu.max_abs().max(f64::MIN_POSITIVE);

    for col in 0..n {
        // Pick the largest remaining entry in this column.
        let mut best = col;
        let mut best_abs = lu.get(col, col).norm();
        for r in (col + 1)..n {
            let v = lu.get(r, col).norm();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        pivots[col] = best;
        if best != col {
            for j in 0..n {
                let tmp = lu.get(col, j);
                lu.set(col, j, lu.get(best, j));
                lu.set(best, j, tmp);
            }
            sign = -sign;
        }
        let pivot = lu.get(col, col);
        if pivot.norm() <= 1e-300 * scale {
            return Err(Error::SingularNode {
                kappa,
                pivot: pivot.norm(),
            });
        }
        for r in (col + 1)..n {
            let factor = lu.get(r, col) / pivot;
            lu.set(r, col, factor);
            for j in (col + 1)..n {
                let v = lu.get(r, j) - factor * lu.get(col, j);
                lu.set(r, j, v);
            }
        }
    }
    Ok(LuFactors { lu, pivots, sign })
}

impl LuFactors {
    /// Solve `A x = b`, overwriting nothing; returns the solution.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.n;
        let mut x = b.to_vec();
        // Apply the row swaps in factorization order.
        for (col, &p) in self.pivots.iter().enumerate() {
            if p != col {
                x.swap(col, p);
            }
        }
        // Forward substitution (unit lower triangle).
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc / self.lu.get(i, i);
        }
        x
    }

    /// Determinant of the factored matrix.
    pub fn det(&self) -> Complex64 {
        let mut d = Complex64::new(self.sign, 0.0);
        for i in 0..self.lu.n {
            d *= self.lu.get(i, i);
        }
        d
    }

    /// `log|det|`, immune to over/underflow of the product.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.lu.n).map(|i| self.lu.get(i, i).norm().ln()).sum()
    }

    /// Smallest pivot magnitude; the near-singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        (0..self.lu.n)
            .map(|i| self.lu.get(i, i).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solve `A x = b` and verify the residual `|A x - b|_inf` against
/// `tol * |A|_max * |x|_inf`; a failure here means the node's system was too
/// ill-conditioned to trust, which the contour driver reports rather than
/// silently folding into the quadrature sum.
pub fn solve_checked(
    a: &CMatrix,
    b: &[Complex64],
    kappa: Complex64,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let factors = lu_factor(a, kappa)?;
    let x = factors.solve(b);
    let ax = a.matvec(&x);
    let mut resid: f64 = 0.0;
    for i in 0..b.len() {
        resid = resid.max((ax[i] - b[i]).norm());
    }
    let xmax = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let bound = tol * a.max_abs().max(1e-300) * xmax.max(1e-300);
    if resid > bound.max(tol * b.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
        return Err(Error::ResidualTooLarge { kappa, residual: resid });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn example_matrix() -> CMatrix {
        let mut a = CMatrix::zeros(3);
        a.set(0, 0, c(2.0, 1.0));
        a.set(0, 1, c(-1.0, 0.0));
        a.set(0, 2, c(0.5, -0.5));
        a.set(1, 0, c(0.0, 3.0));
        a.set(1, 1, c(1.0, 1.0));
        a.set(1, 2, c(-2.0, 0.0));
        a.set(2, 0, c(1.0, 0.0));
        a.set(2, 1, c(0.0, -1.0));
        a.set(2, 2, c(4.0, 2.0));
        a
    }

    #[test]
    fn solve_recovers_known_vector() {
        let a = example_matrix();
        let x_true = vec![c(1.0, -1.0), c(0.5, 2.0), c(-3.0, 0.25)];
        let b = a.matvec(&x_true);
        let x = solve_checked(&a, &b, c(0.0, 0.0), 1e-12).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).norm() < 1e-13, "{xi} vs {ti}");
        }
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        // 2x2 check where the determinant is easy by hand.
        let mut a = CMatrix::zeros(2);
        a.set(0, 0, c(1.0, 2.0));
        a.set(0, 1, c(3.0, 0.0));
        a.set(1, 0, c(0.0, -1.0));
        a.set(1, 1, c(2.0, 1.0));
        let det = lu_factor(&a, c(0.0, 0.0)).unwrap().det();
        // (1+2i)(2+i) - 3(-i) = 2 + i + 4i - 2 + 3i = 8i... keep explicit:
        let expected = c(1.0, 2.0) * c(2.0, 1.0) - c(3.0, 0.0) * c(0.0, -1.0);
        assert!((det - expected).norm() < 1e-14);
    }

    #[test]
    fn log_abs_det_consistent_with_det() {
        let a = example_matrix();
        let f = lu_factor(&a, c(0.0, 0.0)).unwrap();
        assert!((f.log_abs_det() - f.det().norm().ln()).abs() < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let mut a = CMatrix::zeros(2);
        a.set(0, 0, c(0.0, 0.0));
        a.set(0, 1, c(1.0, 0.0));
        a.set(1, 0, c(1.0, 0.0));
        a.set(1, 1, c(0.0, 0.0));
        let b = vec![c(2.0, 0.0), c(3.0, 0.0)];
        let x = solve_checked(&a, &b, c(0.0, 0.0), 1e-12).unwrap();
        assert!((x[0] - c(3.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = CMatrix::zeros(2);
        a.set(0, 0, c(1.0, 0.0));
        a.set(0, 1, c(2.0, 0.0));
        a.set(1, 0, c(2.0, 0.0));
        a.set(1, 1, c(4.0, 0.0));
        let err = lu_factor(&a, c(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::SingularNode { .. }));
    }

    #[test]
    fn determinant_sign_tracks_row_swaps() {
        // Permutation matrix with det -1.
        let mut a = CMatrix::zeros(2);
        a.set(0, 1, c(1.0, 0.0));
        a.set(1, 0, c(1.0, 0.0));
        let det = lu_factor(&a, c(0.0, 0.0)).unwrap().det();
        assert!((det - c(-1.0, 0.0)).norm() < 1e-15);
    }
}
