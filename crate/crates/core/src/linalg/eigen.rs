use super::Matrix;
use crate::scalar::Real;

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver. Only symmetric input is meaningful; the upper
/// triangle is assumed to mirror the lower one.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> SymmetricEigen<T> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    let scale = m.frobenius_norm();
    if scale == T::zero() {
        return finish(m, v);
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for q in 0..n {
            for p in 0..q {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= eps * scale {
            break;
        }
        for q in 1..n {
            for p in 0..q {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // skip rotations that cannot change the diagonal in working precision
                if apq.abs() <= eps * T::lit(0.01) * (app.abs().min(aqq.abs())) {
                    m[(p, q)] = T::zero();
                    m[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    finish(m, v)
}

/// Applies `Jᵀ M J` with the Givens rotation acting on indices `p < q`.
fn rotate<T: Real>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    let n = m.rows();
    {
        let (cp, cq) = m.col_pair_mut(p, q);
        for k in 0..n {
            let (x, y) = (cp[k], cq[k]);
            cp[k] = c * x - s * y;
            cq[k] = s * x + c * y;
        }
    }
    for k in 0..n {
        let (x, y) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * x - s * y;
        m[(q, k)] = s * x + c * y;
    }
    let (vp, vq) = v.col_pair_mut(p, q);
    for k in 0..n {
        let (x, y) = (vp[k], vq[k]);
        vp[k] = c * x - s * y;
        vq[k] = s * x + c * y;
    }
}

fn finish<T: Real>(m: Matrix<T>, v: Matrix<T>) -> SymmetricEigen<T> {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their index order
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    SymmetricEigen { values, vectors }
}
