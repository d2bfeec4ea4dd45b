//! Small dense linear algebra: Householder QR with in-order rank repair and
//! Cholesky solves for the low-dimensional models (tens of columns).

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::scalar::Real;

/// Relative column-norm threshold below which a column is declared
/// linearly dependent on the columns before it.
pub const RANK_TOL: f64 = 1e-7;

/// Copies the rows `idx` of `x` into a new column-major matrix.
pub fn take_rows<T: Real>(x: ArrayView2<'_, T>, idx: &[usize]) -> Array2<T> {
    let p = x.ncols();
    let mut out = Array2::<T>::zeros((idx.len(), p).f());
    for j in 0..p {
        let src = x.column(j);
        let mut dst = out.column_mut(j);
        for (o, &i) in idx.iter().enumerate() {
            dst[o] = src[i];
        }
    }
    out
}

/// Copies `x` into column-major layout (no-op copy if already so).
pub fn to_col_major<T: Real>(x: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = Array2::<T>::zeros(x.raw_dim().f());
    out.assign(&x);
    out
}

/// Householder QR of a column-major `n x k` design, processing columns in
/// their given order and skipping any column whose residual norm after
/// projection onto the kept columns falls below `RANK_TOL` times its norm.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    n: usize,
    kept: Vec<usize>,
    // upper-triangular factor of the kept columns, column-major rank x rank
    r: Vec<T>,
    // reflector vectors starting at row `i` for reflector i, with 2/(v'v)
    reflectors: Vec<(Vec<T>, T)>,
}

impl<T: Real> Qr<T> {
    pub fn new(cols: &[Vec<T>], n: usize) -> Self {
        let tol = T::tol(RANK_TOL);
        let mut kept = Vec::new();
        let mut reflectors: Vec<(Vec<T>, T)> = Vec::new();
        let mut r_cols: Vec<Vec<T>> = Vec::new();
        for (j, col) in cols.iter().enumerate() {
            debug_assert_eq!(col.len(), n);
            let orig = col.iter().map(|&v| v * v).sum::<T>().sqrt();
            let mut a = col.clone();
            for (i, (v, beta)) in reflectors.iter().enumerate() {
                apply_reflector(&mut a[i..], v, *beta);
            }
            let rank = reflectors.len();
            if rank >= n {
                continue;
            }
            let tail = a[rank..].iter().map(|&v| v * v).sum::<T>().sqrt();
            if orig == T::zero() || tail <= tol * orig {
                continue;
            }
            let alpha = if a[rank] >= T::zero() { -tail } else { tail };
            let mut v = a[rank..].to_vec();
            v[0] -= alpha;
            let vtv = v.iter().map(|&x| x * x).sum::<T>();
            let beta = if vtv > T::zero() {
                T::lit(2.0) / vtv
            } else {
                T::zero()
            };
            let mut rc = a[..rank].to_vec();
            rc.push(alpha);
            r_cols.push(rc);
            reflectors.push((v, beta));
            kept.push(j);
        }
        let rank = kept.len();
        let mut r = vec![T::zero(); rank * rank];
        for (c, rc) in r_cols.iter().enumerate() {
            for (row, &v) in rc.iter().enumerate() {
                r[c * rank + row] = v;
            }
        }
        Qr {
            n,
            kept,
            r,
            reflectors,
        }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Indices of the columns retained, in input order.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    fn r_at(&self, row: usize, col: usize) -> T {
        self.r[col * self.rank() + row]
    }

    /// Least-squares coefficients of the kept columns and the residual sum
    /// of squares.
    pub fn solve(&self, y: &[T]) -> (Vec<T>, T) {
        assert_eq!(y.len(), self.n);
        let mut qty = y.to_vec();
        for (i, (v, beta)) in self.reflectors.iter().enumerate() {
            apply_reflector(&mut qty[i..], v, *beta);
        }
        let k = self.rank();
        let rss = qty[k..].iter().map(|&v| v * v).sum::<T>();
        let mut coef = qty[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = coef[i];
            for c in i + 1..k {
                s -= self.r_at(i, c) * coef[c];
            }
            coef[i] = s / self.r_at(i, i);
        }
        (coef, rss)
    }

    /// `(X'X)^{-1}` over the kept columns, as a row-major `rank x rank` matrix.
    pub fn unscaled_covariance(&self) -> Vec<T> {
        let k = self.rank();
        // R^{-1} by back substitution, column by column.
        let mut rinv = vec![T::zero(); k * k];
        for c in 0..k {
            for i in (0..=c).rev() {
                let mut s = if i == c { T::one() } else { T::zero() };
                for m in i + 1..=c {
                    s -= self.r_at(i, m) * rinv[m * k + c];
                }
                rinv[i * k + c] = s / self.r_at(i, i);
            }
        }
        let mut cov = vec![T::zero(); k * k];
        for a in 0..k {
            for b in a..k {
                let mut s = T::zero();
                for m in b.max(a)..k {
                    s += rinv[a * k + m] * rinv[b * k + m];
                }
                cov[a * k + b] = s;
                cov[b * k + a] = s;
            }
        }
        cov
    }
}

/// Inner product with four independent accumulators (vectorizes).
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

fn apply_reflector<T: Real>(a: &mut [T], v: &[T], beta: T) {
    let s = beta * dot(a, v);
    for (x, &y) in a.iter_mut().zip(v) {
        *x -= s * y;
    }
}

/// Solves `A x = b` for symmetric positive definite row-major `A` (k x k).
/// Returns `None` if `A` is not numerically positive definite.
pub fn cholesky_solve<T: Real>(a: &[T], k: usize, b: &[T]) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..k {
        let mut s = z[i];
        for m in 0..i {
            s -= l[i * k + m] * z[m];
        }
        z[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = z[i];
        for m in i + 1..k {
            s -= l[m * k + i] * z[m];
        }
        z[i] = s / l[i * k + i];
    }
    Some(z)
}
