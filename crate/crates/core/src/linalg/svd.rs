use super::{axpy, dot, norm2, Matrix};
use crate::scalar::Real;

/// Thin SVD `A V = U Σ` from one-sided (Hestenes) Jacobi.
#[derive(Clone, Debug)]
pub struct JacobiSvd<T> {
    /// Singular values, non-increasing.
    pub sigma: Vec<T>,
    /// `m × n`; columns with zero singular value are zero.
    pub u: Matrix<T>,
    /// `n × n`, orthogonal.
    pub v: Matrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD of an `m × n` matrix. Cost grows with `n²`, so call it
/// on the orientation with fewer columns.
pub fn jacobi_svd<T: Real>(a: &Matrix<T>) -> JacobiSvd<T> {
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let tol = T::epsilon() * T::from_usize_lossy(m.max(1)).sqrt();
    // columns at round-off level relative to the whole matrix are left alone
    let tiny = {
        let f = T::epsilon() * a.frobenius_norm();
        f * f
    };
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for q in 1..n {
            for p in 0..q {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                if alpha <= tiny || beta <= tiny {
                    continue;
                }
                let gamma = dot(w.col(p), w.col(q));
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma: Vec<T> = order.iter().map(|&j| norms[j]).collect();
    let v_sorted = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    let u = Matrix::from_fn(m, n, |i, k| {
        let s = sigma[k];
        if s > T::zero() {
            w[(i, order[k])] / s
        } else {
            T::zero()
        }
    });
    JacobiSvd {
        sigma,
        u,
        v: v_sorted,
    }
}

fn rotate_pair<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    let (cp, cq) = m.col_pair_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Householder vectors for the QR factorisation of a tall matrix, plus `R`.
struct Householder<T> {
    /// Unit reflector vectors, `vectors[k]` acts on rows `k..m`.
    vectors: Vec<Vec<T>>,
    r: Matrix<T>,
}

fn householder<T: Real>(a: &Matrix<T>) -> Householder<T> {
    let (m, n) = (a.rows(), a.cols());
    assert!(m >= n, "householder QR needs rows >= cols");
    let mut w = a.clone();
    let mut vectors = Vec::with_capacity(n);
    for k in 0..n {
        let x = &w.col(k)[k..];
        let xn = norm2(x);
        let mut v = x.to_vec();
        if xn == T::zero() {
            vectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= T::zero() { -xn } else { xn };
        v[0] -= alpha;
        let vn = norm2(&v);
        if vn == T::zero() {
            vectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vn);
        for j in k..n {
            let col = &mut w.col_mut(j)[k..];
            let d = dot(&v, col);
            axpy(-(d + d), &v, col);
        }
        vectors.push(v);
    }
    let r = Matrix::from_fn(n, n, |i, j| if i <= j { w[(i, j)] } else { T::zero() });
    Householder { vectors, r }
}

/// The `n × n` triangular factor `R` of `A = Q R` (`A` tall).
pub fn householder_r<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    householder(a).r
}

/// Orthonormal basis of the orthogonal complement of `span(u)`.
///
/// `u` must have orthonormal columns (`m × k`, `k ≤ m`); the result is
/// `m × (m - k)`.
pub fn orthogonal_complement<T: Real>(u: &Matrix<T>) -> Matrix<T> {
    let (m, k) = (u.rows(), u.cols());
    let h = householder(u);
    let mut out = Matrix::zeros(m, m - k);
    for j in k..m {
        let col = out.col_mut(j - k);
        col[j] = T::one();
        for (idx, v) in h.vectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let tail = &mut col[idx..];
            let d = dot(v, tail);
            axpy(-(d + d), v, tail);
        }
    }
    out
}
