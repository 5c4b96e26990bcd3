//! Small dense complex matrices.
//!
//! Antenna counts per AP are small (N is 1 to 8 in practice), so matrices are
//! stored row-major in a flat `Vec` and factorized with textbook kernels:
//! Cholesky for Hermitian positive definite solves and a cyclic Jacobi sweep
//! (on the real symmetric embedding) for Hermitian square roots.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{cplx, czero, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![czero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = cplx(s, T::zero());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(n: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must hold n*n entries");
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn trace(&self) -> C<T> {
        (0..self.n).fold(czero(), |acc, i| acc + self[(i, i)])
    }

    /// Real part of the trace, the quantity used for Hermitian matrices.
    pub fn trace_re(&self) -> T {
        (0..self.n).map(|i| self[(i, i)].re).sum()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: T) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// `self += s * v v^H`.
    pub fn add_outer(&mut self, v: &[C<T>], s: T) {
        debug_assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            let vi = v[i] * s;
            for j in 0..self.n {
                self.data[i * self.n + j] += vi * v[j].conj();
            }
        }
    }

    pub fn add_diag(&mut self, s: T) {
        for i in 0..self.n {
            self.data[i * self.n + i].re += s;
        }
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.n];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[C<T>], out: &mut [C<T>]) {
        debug_assert_eq!(v.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(v).fold(czero(), |acc, (a, b)| acc + a * b);
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        Self::from_fn(n, |i, j| {
            (0..n).fold(czero(), |acc, k| acc + self[(i, k)] * other[(k, j)])
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x.conj()).collect(),
        }
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        let scale = self.frobenius().max(T::min_positive_value());
        (0..self.n).all(|i| {
            (i..self.n).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol * scale)
        })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.re == T::zero() && x.im == T::zero())
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::new(self)
    }

    /// Principal square root of a Hermitian positive semi-definite matrix.
    ///
    /// Eigenvalues in `[-1e-12 * tr/N, 0)` are clipped to zero; anything more
    /// negative is reported as [`Error::NotPositiveSemidefinite`].
    pub fn hermitian_sqrt(&self) -> Result<Self> {
        let n = self.n;
        if n == 0 {
            return Ok(self.clone());
        }
        if n == 1 {
            let v = self[(0, 0)].re;
            return clip_eigenvalue(v, v).map(|s| Self::scaled_identity(1, s.sqrt()));
        }
        let (vals, vecs) = symmetric_eigen(&self.real_embedding());
        let m = 2 * n;
        let floor = self.trace_re() / T::of(n as f64);
        let top = vals.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        // roundoff-level eigenvalues split their embedded pair; treat as exact zeros
        let noise = T::epsilon() * T::of(m as f64) * top;
        let mut roots = Vec::with_capacity(m);
        for &lam in &vals {
            let lam = clip_eigenvalue(lam, floor)?;
            roots.push(if lam <= noise { T::zero() } else { lam.sqrt() });
        }
        // f(A) embeds as [[Re f, -Im f], [Im f, Re f]]; read off the left column blocks.
        Ok(Self::from_fn(n, |i, j| {
            let mut re = T::zero();
            let mut im = T::zero();
            for (k, r) in roots.iter().enumerate() {
                let vj = vecs[j * m + k];
                re += vecs[i * m + k] * *r * vj;
                im += vecs[(i + n) * m + k] * *r * vj;
            }
            cplx(re, im)
        }))
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<T> {
        let (mut vals, _) = symmetric_eigen(&self.real_embedding());
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        // the embedding doubles every eigenvalue
        vals.into_iter().step_by(2).collect()
    }

    fn real_embedding(&self) -> Vec<T> {
        let n = self.n;
        let m = 2 * n;
        let mut a = vec![T::zero(); m * m];
        for i in 0..n {
            for j in 0..n {
                let z = self[(i, j)];
                a[i * m + j] = z.re;
                a[(i + n) * m + (j + n)] = z.re;
                a[(i + n) * m + j] = z.im;
                a[i * m + (j + n)] = -z.im;
            }
        }
        a
    }
}

fn clip_eigenvalue<T: Real>(lam: T, floor_scale: T) -> Result<T> {
    if lam >= T::zero() {
        Ok(lam)
    } else if lam >= -T::of(1e-12) * floor_scale.abs() {
        Ok(T::zero())
    } else {
        Err(Error::NotPositiveSemidefinite {
            eigenvalue: lam.as_f64(),
        })
    }
}

/// Cyclic Jacobi eigen-decomposition of a real symmetric `m x m` matrix.
/// Returns eigenvalues and the row-major eigenvector matrix (columns are eigenvectors).
fn symmetric_eigen<T: Real>(a: &[T]) -> (Vec<T>, Vec<T>) {
    let m = (a.len() as f64).sqrt() as usize;
    let mut a = a.to_vec();
    let mut v = vec![T::zero(); m * m];
    for i in 0..m {
        v[i * m + i] = T::one();
    }
    let total: T = a.iter().map(|x| *x * *x).sum();
    let tol = T::epsilon() * T::epsilon() * total;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[p * m + q] * a[p * m + q];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `A = L L^H` of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<C<T>>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let mut l = vec![czero::<T>(); n * n];
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[j * n + j] = cplx(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [C<T>]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        // forward: L z = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i].re;
        }
        // backward: L^H x = z
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i].conj() * x[k];
            }
            x[i] = s / self.l[i * n + i].re;
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        let mut col = vec![czero(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}
