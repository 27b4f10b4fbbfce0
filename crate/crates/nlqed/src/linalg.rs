//! Small dense complex linear algebra: LU solves for kernel inversion and a
//! one-sided Jacobi SVD for Schmidt spectra. Matrices here stay well under
//! a thousand rows, so plain partial-pivot LU and Jacobi sweeps are plenty.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular at elimination step {0}")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LuFactors {
    lu: Array2<Complex64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    pub fn new(matrix: &Array2<Complex64>) -> Result<Self, LinalgError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(LinalgError::Shape(format!("{}x{} not square", n, matrix.ncols())));
        }
        let mut lu = matrix.clone();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut pivot = k;
            let mut max = lu[[k, k]].norm_sqr();
            for i in k + 1..n {
                let mag = lu[[i, k]].norm_sqr();
                if mag > max {
                    max = mag;
                    pivot = i;
                }
            }
            if max == 0.0 {
                return Err(LinalgError::Singular(k));
            }
            pivots[k] = pivot;
            if pivot != k {
                for j in 0..n {
                    let tmp = lu[[k, j]];
                    lu[[k, j]] = lu[[pivot, j]];
                    lu[[pivot, j]] = tmp;
                }
            }
            let diag = lu[[k, k]];
            for i in k + 1..n {
                let factor = lu[[i, k]] / diag;
                lu[[i, k]] = factor;
                for j in k + 1..n {
                    let sub = factor * lu[[k, j]];
                    lu[[i, j]] -= sub;
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    pub fn solve(&self, rhs: &Array1<Complex64>) -> Result<Array1<Complex64>, LinalgError> {
        let n = self.lu.nrows();
        if rhs.len() != n {
            return Err(LinalgError::Shape(format!("rhs len {} vs {}", rhs.len(), n)));
        }
        let mut x = rhs.clone();
        // The factorization swapped full rows (multipliers included), so the
        // permutation must be applied in full before forward substitution.
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for k in 0..n {
            let xk = x[k];
            for i in k + 1..n {
                let sub = self.lu[[i, k]] * xk;
                x[i] -= sub;
            }
        }
        for k in (0..n).rev() {
            let mut sum = x[k];
            for j in k + 1..n {
                sum -= self.lu[[k, j]] * x[j];
            }
            x[k] = sum / self.lu[[k, k]];
        }
        Ok(x)
    }
}

/// Singular values of a complex matrix by one-sided Jacobi rotations,
/// descending order.
pub fn singular_values(matrix: &Array2<Complex64>) -> Vec<f64> {
    // Work on the tall orientation so column sweeps see the smaller side.
    let mut a = if matrix.nrows() >= matrix.ncols() {
        matrix.clone()
    } else {
        matrix.t().mapv(|v| v.conj())
    };
    let n = a.ncols();
    let tol = 1e-28;

    for _sweep in 0..60 {
        let mut converged = true;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let mut app = 0.0f64;
                let mut aqq = 0.0f64;
                let mut apq = Complex64::new(0.0, 0.0);
                for i in 0..a.nrows() {
                    let u = a[[i, p]];
                    let v = a[[i, q]];
                    app += u.norm_sqr();
                    aqq += v.norm_sqr();
                    apq += u.conj() * v;
                }
                if apq.norm_sqr() <= tol * app * aqq {
                    continue;
                }
                converged = false;
                // Diagonalize the 2x2 Gram block [[app, apq], [conj(apq), aqq]].
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let u = a[[i, p]];
                    let v = a[[i, q]];
                    a[[i, p]] = c * u - s * phase.conj() * v;
                    a[[i, q]] = s * phase * u + c * v;
                }
            }
        }
        if converged {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| (0..a.nrows()).map(|i| a[[i, j]].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((n, m), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn lu_solves_known_system() {
        // [[2, i], [0, 3]] x = [2+i, 6] has solution [1, 2].
        let a = Array2::from_shape_vec(
            (2, 2),
            vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(3.0, 0.0),
            ],
        )
        .unwrap();
        let b = Array1::from_vec(vec![Complex64::new(2.0, 2.0), Complex64::new(6.0, 0.0)]);
        let x = LuFactors::new(&a).unwrap().solve(&b).unwrap();
        assert_relative_eq!(x[0].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(x[0].im, 0.0, epsilon = 1e-14);
        assert_relative_eq!(x[1].re, 2.0, epsilon = 1e-14);
        assert_relative_eq!(x[1].im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lu_residual_small_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5usize, 40, 120] {
            let a = random_matrix(&mut rng, n, n);
            let b = Array1::from_shape_fn(n, |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let x = LuFactors::new(&a).unwrap().solve(&b).unwrap();
            let r = a.dot(&x) - &b;
            // Backward error ||r|| / (||A|| ||x||) is the right metric for
            // possibly ill-conditioned random systems.
            let norm_inf = |v: &Array1<Complex64>| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let a_inf = (0..n)
                .map(|i| (0..n).map(|j| a[[i, j]].norm()).sum::<f64>())
                .fold(0.0, f64::max);
            let rel = norm_inf(&r) / (a_inf * norm_inf(&x));
            assert!(rel < 1e-12, "backward error {rel} too large for n={n}");
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Array2::from_elem((3, 3), Complex64::new(1.0, 0.0));
        assert!(matches!(LuFactors::new(&a), Err(LinalgError::Singular(_))));
    }

    #[test]
    fn svd_of_diagonal() {
        let mut a = Array2::zeros((3, 3));
        a[[0, 0]] = Complex64::new(0.0, 3.0);
        a[[1, 1]] = Complex64::new(-1.0, 0.0);
        a[[2, 2]] = Complex64::new(0.0, -2.0);
        let s = singular_values(&a);
        assert_relative_eq!(s[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_frobenius_and_gram_invariants() {
        // sum sigma^2 = ||A||_F^2 and sum sigma^4 = ||A^H A||_F^2.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (n, m) in [(6, 6), (8, 5), (4, 9)] {
            let a = random_matrix(&mut rng, n, m);
            let s = singular_values(&a);
            let frob2: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            let s2: f64 = s.iter().map(|x| x * x).sum();
            assert_relative_eq!(s2, frob2, max_relative = 1e-12);

            let ah = a.t().mapv(|v| v.conj());
            let gram = ah.dot(&a);
            let gram_frob2: f64 = gram.iter().map(|v| v.norm_sqr()).sum();
            let s4: f64 = s.iter().map(|x| x.powi(4)).sum();
            assert_relative_eq!(s4, gram_frob2, max_relative = 1e-11);
        }
    }
}
