use rayon::prelude::*;

use super::{axpy, dot, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense Cholesky factor `A = L Lᵀ`. Column `j` of the stored matrix holds
/// row `j` of `L`, so every inner product runs over contiguous memory.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lt: Matrix<T>,
}

/// Rows below which the column update stays sequential.
const PAR_MIN: usize = 256;

impl<T: Real> Cholesky<T> {
    /// Only the lower triangle of `a` is read.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of {}x{}",
                n,
                a.cols()
            )));
        }
        let mut lt = Matrix::zeros(n, n);
        for j in 0..n {
            let d = a[(j, j)] - dot(&lt.col(j)[..j], &lt.col(j)[..j]);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "non-positive pivot {:e} at row {j} of {n}",
                    d.as_f64()
                )));
            }
            let djj = d.sqrt();
            lt[(j, j)] = djj;
            let entry = |i: usize| (a[(i, j)] - dot(&lt.col(i)[..j], &lt.col(j)[..j])) / djj;
            let vals: Vec<T> = if n - j > PAR_MIN {
                (j + 1..n).into_par_iter().map(entry).collect()
            } else {
                (j + 1..n).map(entry).collect()
            };
            for (i, v) in (j + 1..n).zip(vals) {
                lt[(j, i)] = v;
            }
        }
        Ok(Self { lt })
    }

    pub fn dim(&self) -> usize {
        self.lt.rows()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let lt = &self.lt;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = y[i] - dot(&lt.col(i)[..i], &y[..i]);
            y[i] = s / lt[(i, i)];
        }
        for i in (0..n).rev() {
            y[i] /= lt[(i, i)];
            let xi = y[i];
            let (head, _) = y.split_at_mut(i);
            axpy(-xi, &lt.col(i)[..i], head);
        }
        y
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let cols: Vec<Vec<T>> = (0..b.cols()).map(|j| self.solve(b.col(j))).collect();
        Matrix::from_columns(b.rows(), &cols)
    }
}

/// Cholesky factor of a symmetric positive-definite band matrix.
///
/// Row `i` stores `L[i, i-bw..=i]`; entries left of column 0 are unused.
#[derive(Clone, Debug)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    band: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    /// `entry(i, j)` must return `A[i, j]` for `j <= i`, `i - j <= bw`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let w = bw + 1;
        let mut band = vec![T::zero(); n * w];
        // band[i*w + (j + bw - i)] = L[i, j]
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                band[i * w + (j + bw - i)] = entry(i, j);
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "non-positive pivot {:e} at row {i} of {n}",
                            s.as_f64()
                        )));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.band[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Matrix<f64> {
        // tridiagonal-ish plus a dense low-rank part
        Matrix::from_fn(n, n, |i, j| {
            let base = if i == j {
                4.0
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            };
            base + 0.01 / (1.0 + i as f64 + j as f64)
        })
    }

    #[test]
    fn dense_solve_recovers_rhs() {
        let a = spd(12);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let got = Cholesky::factor(&a).unwrap().solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-13);
        }
    }

    #[test]
    fn band_matches_dense_on_banded_matrix() {
        let n = 30;
        let bw = 3;
        let a = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                10.0
            } else if i.abs_diff(j) <= bw {
                -1.0 / (1.0 + i.abs_diff(j) as f64)
            } else {
                0.0
            }
        });
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let dense = Cholesky::factor(&a).unwrap().solve(&b);
        let band = BandCholesky::factor(n, bw, |i, j| a[(i, j)])
            .unwrap()
            .solve(&b);
        for (x, y) in dense.iter().zip(&band) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = Matrix::<f64>::identity(3);
        a[(2, 2)] = -1.0;
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(BandCholesky::factor(3, 1, |i, j| a[(i, j)]).is_err());
    }
}
