//! Cholesky factorization and ridge regression on SPD systems.

use super::matrix::{dot, Matrix};
use crate::{CoreError, Result};

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Cholesky> {
        let n = a.rows();
        if a.cols() != n {
            return Err(CoreError::Validation("cholesky needs a square matrix".into()));
        }
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(CoreError::Numerical(format!(
                            "matrix not positive definite at pivot {i} (value {s})"
                        )));
                    }
                    l[(i, j)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solve L z = b in place.
    fn forward_sub(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve Lᵀ x = z in place.
    fn backward_sub(&self, z: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
    }

    /// Solve A x = b.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim());
        let mut x = b.to_vec();
        self.forward_sub(&mut x);
        self.backward_sub(&mut x);
        x
    }

    /// Solve A X = B column-wise for B (n×k).
    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows(), self.dim());
        let n = self.dim();
        let k = b.cols();
        let mut out = Matrix::zeros(n, k);
        let mut col = vec![0.0; n];
        for j in 0..k {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.forward_sub(&mut col);
            self.backward_sub(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    /// φᵀ A⁻¹ φ = ‖L⁻¹φ‖².
    pub fn quad_form(&self, phi: &[f64]) -> f64 {
        assert_eq!(phi.len(), self.dim());
        let mut z = phi.to_vec();
        self.forward_sub(&mut z);
        dot(&z, &z)
    }

    /// Full inverse; fine for the small d used here.
    pub fn inverse(&self) -> Matrix {
        self.solve_mat(&Matrix::identity(self.dim()))
    }
}

/// Ridge regression: given X (m×d), Y (m×k) and β > 0, returns
/// (W, Λ) with Λ = XᵀX + β·I and W = Λ⁻¹XᵀY. m = 0 is allowed and
/// yields the prior (Λ = β·I, W = 0).
pub fn ridge_solve(x: &Matrix, y: &Matrix, beta: f64) -> Result<(Matrix, Matrix)> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(CoreError::Validation(format!("ridge beta must be positive, got {beta}")));
    }
    let d = x.cols();
    let k = y.cols();
    if x.rows() != y.rows() {
        return Err(CoreError::Validation(format!(
            "ridge row mismatch: X has {} rows, Y has {}",
            x.rows(),
            y.rows()
        )));
    }
    x.check_finite("ridge X")?;
    y.check_finite("ridge Y")?;

    let mut lambda = x.gram();
    if lambda.rows() == 0 {
        lambda = Matrix::zeros(d, d);
    }
    for i in 0..d {
        lambda[(i, i)] += beta;
    }
    let w = if x.rows() == 0 {
        Matrix::zeros(d, k)
    } else {
        let xty = x.t_matmul(y);
        Cholesky::factor(&lambda)?.solve_mat(&xty)
    };
    Ok((w, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::Rng;

    #[test]
    fn empty_design_gives_prior() {
        let x = Matrix::zeros(0, 2);
        let y = Matrix::zeros(0, 1);
        let (w, lambda) = ridge_solve(&x, &y, 1.0).unwrap();
        assert_eq!(lambda, Matrix::identity(2));
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_hand_solve() {
        // X = e1 in R^2, Y = [3], beta = 1:
        // Λ = diag(2, 1), XᵀY = (3, 0), W = (1.5, 0).
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let y = Matrix::from_rows(&[vec![3.0]]);
        let (w, lambda) = ridge_solve(&x, &y, 1.0).unwrap();
        assert!((lambda[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((lambda[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((lambda[(0, 1)]).abs() < 1e-15);
        assert!((w[(0, 0)] - 1.5).abs() < 1e-12);
        assert!(w[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn recovers_noiseless_weights() {
        let mut rng = Rng::new(42);
        let m = 50;
        let d = 4;
        let w_true = Matrix::from_fn(d, 1, |_, _| rng.uniform(-1.0, 1.0));
        let x = Matrix::from_fn(m, d, |_, _| rng.uniform(-1.0, 1.0));
        let y = x.matmul(&w_true);
        let (w, _) = ridge_solve(&x, &y, 1e-8).unwrap();
        for i in 0..d {
            assert!((w[(i, 0)] - w_true[(i, 0)]).abs() < 1e-4);
        }
    }

    #[test]
    fn residual_bound_holds() {
        let mut rng = Rng::new(3);
        for &(m, d, beta) in &[(0usize, 3usize, 1.0), (1, 2, 0.5), (30, 5, 2.0), (100, 4, 1e-6)] {
            let x = Matrix::from_fn(m, d, |_, _| rng.uniform(-2.0, 2.0));
            let y = Matrix::from_fn(m, 2, |_, _| rng.uniform(-2.0, 2.0));
            let (w, lambda) = ridge_solve(&x, &y, beta).unwrap();
            let xty = x.t_matmul(&y);
            let mut resid = lambda.matmul(&w);
            resid.add_scaled(&xty, -1.0);
            let bound = 1e-8 * xty.max_abs().max(1.0);
            assert!(resid.max_abs() <= bound, "residual {} > {}", resid.max_abs(), bound);
        }
    }

    #[test]
    fn collinear_rows_stay_solvable() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![1.0, 2.0]]);
        let y = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![1.0]]);
        let (w, lambda) = ridge_solve(&x, &y, 1.0).unwrap();
        let xty = x.t_matmul(&y);
        let mut resid = lambda.matmul(&w);
        resid.add_scaled(&xty, -1.0);
        assert!(resid.max_abs() <= 1e-8 * xty.max_abs().max(1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_rows(&[vec![f64::NAN, 0.0]]);
        let y = Matrix::from_rows(&[vec![1.0]]);
        assert!(ridge_solve(&x, &y, 1.0).is_err());
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert!(ridge_solve(&x, &y, 0.0).is_err());
        assert!(ridge_solve(&x, &y, -1.0).is_err());
    }

    #[test]
    fn lambda_is_spd_with_margin() {
        // Min eigenvalue of Λ is at least β: Cholesky of Λ − (β − 1e-10)·I succeeds.
        let mut rng = Rng::new(9);
        let x = Matrix::from_fn(20, 4, |_, _| rng.uniform(-1.0, 1.0));
        let y = Matrix::from_fn(20, 1, |_, _| rng.uniform(-1.0, 1.0));
        let beta = 0.7;
        let (_, lambda) = ridge_solve(&x, &y, beta).unwrap();
        let mut shifted = lambda.clone();
        for i in 0..4 {
            shifted[(i, i)] -= beta - 1e-10;
        }
        assert!(Cholesky::factor(&shifted).is_ok());
    }
}
