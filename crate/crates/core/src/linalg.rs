//! Small dense symmetric linear algebra.
//!
//! Information matrices here are at most a few dozen rows, so plain row-major
//! storage with Cholesky and cyclic Jacobi is all that is needed.

use crate::scalar::Real;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Square<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Square<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.set(i, i, T::one());
        }
        out
    }

    /// Every entry equal to `value`.
    pub fn filled(dim: usize, value: T) -> Self {
        Self { dim, data: vec![value; dim * dim] }
    }

    /// `diag` on the diagonal and `off` elsewhere.
    pub fn exchangeable(dim: usize, diag: T, off: T) -> Self {
        let mut out = Self::filled(dim, off);
        for i in 0..dim {
            out.set(i, i, diag);
        }
        out
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut out = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            out.set(i, i, v);
        }
        out
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] += v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.add_at(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `a' M b`.
    pub fn bilinear(&self, a: &[T], b: &[T]) -> T {
        let mb = self.matvec(b);
        a.iter().zip(&mb).map(|(&x, &y)| x * y).sum()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Inverse of a symmetric positive-definite matrix via Cholesky.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn spd_inverse(&self) -> Option<Self> {
        let n = self.dim;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        // Invert L column by column, then form L^-T L^-1.
        let mut linv = Self::zeros(n);
        for c in 0..n {
            for i in c..n {
                let mut s = if i == c { T::one() } else { T::zero() };
                for k in c..i {
                    s -= l.get(i, k) * linv.get(k, c);
                }
                linv.set(i, c, s / l.get(i, i));
            }
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s += linv.get(k, i) * linv.get(k, j);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        Some(out)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> SymmetricEigen<T> {
        let n = self.dim;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut scale = T::zero();
            for i in 0..n {
                for j in 0..n {
                    let x = a.get(i, j) * a.get(i, j);
                    if i == j {
                        scale += x;
                    } else {
                        off += x;
                    }
                }
            }
            if off <= eps * eps * (scale + off) || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq == T::zero() {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a.get(i, i)).collect();
        let vectors = order.iter().map(|&c| (0..n).map(|r| v.get(r, c)).collect()).collect();
        SymmetricEigen { values, vectors }
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_inverse_recovers_identity() {
        let m = Square::from_fn(4, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let inv = m.spd_inverse().unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.max_abs_diff(&Square::identity(4)) < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Square::exchangeable(3, 1.0, 2.0);
        assert!(m.spd_inverse().is_none());
    }

    #[test]
    fn jacobi_on_exchangeable() {
        let m = Square::exchangeable(5, 1.0_f64, 0.3);
        let eig = m.symmetric_eigen();
        for v in &eig.values[..4] {
            assert_relative_eq!(*v, 0.7, epsilon = 1e-12);
        }
        assert_relative_eq!(eig.values[4], 1.0 + 4.0 * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn jacobi_vectors_reconstruct() {
        let m = Square::from_fn(3, |i, j| [[2.0, -1.0, 0.5], [-1.0, 3.0, 0.25], [0.5, 0.25, 1.5]][i][j]);
        let eig = m.symmetric_eigen();
        for (val, vec) in eig.values.iter().zip(&eig.vectors) {
            let mv = m.matvec(vec);
            for (a, b) in mv.iter().zip(vec) {
                assert_relative_eq!(*a, val * b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let m = Square::exchangeable(3, 1.0_f32, 0.2);
        let inv = m.spd_inverse().unwrap();
        assert!(m.matmul(&inv).max_abs_diff(&Square::identity(3)) < 1e-5);
    }
}
