//! Dense complex linear algebra.
//!
//! [`CMat`] is a small row-major complex matrix used by the signal-model and
//! solver code. The factorizations here (partial-pivot LU, Hermitian Jacobi
//! eigendecomposition, modified Gram-Schmidt QR) target the sizes this lab
//! works with (up to 64 x 64) and favor accuracy over blocking tricks.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::math;
use crate::{Error, Result};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative pivot threshold below which a matrix is reported singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(alloc::format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    /// Columns `start..start + len`.
    pub fn col_range(&self, start: usize, len: usize) -> CMat {
        CMat::from_fn(self.rows, len, |i, j| self[(i, start + j)])
    }

    pub fn select_cols(&self, idx: &[usize]) -> CMat {
        CMat::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols != rhs.rows {
            return Err(Error::shape(alloc::format!(
                "matmul {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows,
                rhs.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, rhs.cols);
        gemm(self.rows, self.cols, rhs.cols, &self.data, &rhs.data, &mut out.data);
        Ok(out)
    }

    /// `self * v` for a column vector.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `selfᴴ self`.
    pub fn gram(&self) -> CMat {
        let n = self.cols;
        let mut g = CMat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    /// `self selfᴴ`.
    pub fn outer_gram(&self) -> CMat {
        let n = self.rows;
        let mut g = CMat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for c in 0..self.cols {
                    acc += self[(i, c)] * self[(j, c)].conj();
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    pub fn add(&self, rhs: &CMat) -> CMat {
        debug_assert_eq!(self.shape(), rhs.shape());
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        CMat { data, ..*self }
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        debug_assert_eq!(self.shape(), rhs.shape());
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        CMat { data, ..*self }
    }

    pub fn scale(&self, s: C64) -> CMat {
        let data = self.data.iter().map(|a| a * s).collect();
        CMat { data, ..*self }
    }

    pub fn scale_re(&self, s: f64) -> CMat {
        self.scale(C64::new(s, 0.0))
    }

    /// Adds `s * I` in place.
    pub fn add_diag(&mut self, s: C64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += s;
        }
    }

    pub fn frob_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        math::sqrt(self.frob_norm_sqr())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| math::sqrt(z.norm_sqr())).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Inverse by LU with partial pivoting.
    pub fn inverse(&self) -> Result<CMat> {
        self.inverse_with_cond().map(|(inv, _)| inv)
    }

    /// Inverse plus the 1-norm condition estimate `‖A‖₁‖A⁻¹‖₁`.
    pub fn inverse_with_cond(&self) -> Result<(CMat, f64)> {
        if self.rows != self.cols {
            return Err(Error::shape(alloc::format!(
                "inverse of non-square {}x{}",
                self.rows,
                self.cols
            )));
        }
        let n = self.rows;
        let mut out = CMat::zeros(n, n);
        let cond = lu_inverse(n, &self.data, &mut out.data)?;
        Ok((out, cond))
    }

    /// Solves `self x = b` for a single right-hand side.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let inv = self.inverse()?;
        Ok(inv.mul_vec(b))
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues in ascending order and the unitary matrix of
    /// eigenvectors (as columns).
    pub fn hermitian_eig(&self) -> Result<(Vec<f64>, CMat)> {
        if self.rows != self.cols {
            return Err(Error::shape("eigendecomposition of a non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut v = CMat::identity(n);
        let scale = a.frob_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if math::sqrt(off) <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    let mag = math::sqrt(apq.norm_sqr());
                    if mag <= 1e-300 {
                        continue;
                    }
                    let phase = apq / mag;
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let zeta = (aqq - app) / (2.0 * mag);
                    let t = if zeta >= 0.0 {
                        1.0 / (zeta + math::sqrt(1.0 + zeta * zeta))
                    } else {
                        -1.0 / (-zeta + math::sqrt(1.0 + zeta * zeta))
                    };
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = t * c;
                    // G = D R with D = diag(1, conj(phase)) on (p, q)
                    let g_pp = C64::new(c, 0.0);
                    let g_pq = C64::new(s, 0.0);
                    let g_qp = phase.conj() * (-s);
                    let g_qq = phase.conj() * c;
                    // A <- A G
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = aip * g_pp + aiq * g_qp;
                        a[(i, q)] = aip * g_pq + aiq * g_qq;
                    }
                    // A <- Gᴴ A
                    for j in 0..n {
                        let apj = a[(p, j)];
                        let aqj = a[(q, j)];
                        a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                        a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                    }
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    a[(p, p)].im = 0.0;
                    a[(q, q)].im = 0.0;
                    for i in 0..n {
                        let vip = v[(i, p)];
                        let viq = v[(i, q)];
                        v[(i, p)] = vip * g_pp + viq * g_qp;
                        v[(i, q)] = vip * g_pq + viq * g_qq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let vals = order.iter().map(|&i| a[(i, i)].re).collect();
        let vecs = v.select_cols(&order);
        Ok((vals, vecs))
    }

    /// Thin QR by modified Gram-Schmidt with the diagonal of `R` made real
    /// and nonnegative. Requires `rows >= cols`.
    pub fn qr(&self) -> Result<(CMat, CMat)> {
        let (m, n) = self.shape();
        if m < n {
            return Err(Error::shape("qr needs rows >= cols"));
        }
        let mut q = self.clone();
        let mut r = CMat::zeros(n, n);
        for j in 0..n {
            for i in 0..j {
                let mut proj = ZERO;
                for k in 0..m {
                    proj += q[(k, i)].conj() * q[(k, j)];
                }
                r[(i, j)] = proj;
                for k in 0..m {
                    let qi = q[(k, i)];
                    q[(k, j)] -= proj * qi;
                }
            }
            let norm = math::sqrt((0..m).map(|k| q[(k, j)].norm_sqr()).sum::<f64>());
            if norm <= 1e-300 {
                return Err(Error::RankDeficient { ratio: 0.0 });
            }
            r[(j, j)] = C64::new(norm, 0.0);
            for k in 0..m {
                q[(k, j)] /= norm;
            }
        }
        Ok((q, r))
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `aᴴ b`.
#[inline]
pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(v: &[C64]) -> f64 {
    math::sqrt(norm_sqr(v))
}

/// Row-major `out += a (m x k) * b (k x n)`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Row-major real `out += a (m x k) * b (k x n)`.
pub(crate) fn gemm_real(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Inverts the row-major `n x n` matrix `a` into `out` by LU with partial
/// pivoting. Returns the 1-norm condition estimate.
pub(crate) fn lu_inverse(n: usize, a: &[C64], out: &mut [C64]) -> Result<f64> {
    debug_assert_eq!(a.len(), n * n);
    let max_mag = a.iter().map(|z| math::sqrt(z.norm_sqr())).fold(0.0, f64::max);
    let threshold = SINGULAR_RTOL * max_mag;
    if n == 0 {
        return Ok(1.0);
    }
    if max_mag == 0.0 {
        return Err(Error::SingularMatrix { pivot: 0.0, threshold });
    }
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut best = col;
        let mut best_mag = lu[col * n + col].norm_sqr();
        for r in (col + 1)..n {
            let mag = lu[r * n + col].norm_sqr();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        let pivot_mag = math::sqrt(best_mag);
        if !(pivot_mag >= threshold) || pivot_mag == 0.0 {
            return Err(Error::SingularMatrix {
                pivot: pivot_mag,
                threshold,
            });
        }
        if best != col {
            for j in 0..n {
                lu.swap(col * n + j, best * n + j);
            }
            perm.swap(col, best);
        }
        let pivot = lu[col * n + col];
        let inv_pivot = ONE / pivot;
        for r in (col + 1)..n {
            let f = lu[r * n + col] * inv_pivot;
            lu[r * n + col] = f;
            if f == ZERO {
                continue;
            }
            for j in (col + 1)..n {
                let u = lu[col * n + j];
                lu[r * n + j] -= f * u;
            }
        }
    }
    // Solve for each column of the permuted identity.
    let mut x = vec![ZERO; n];
    for j in 0..n {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if perm[i] == j { ONE } else { ZERO };
        }
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= lu[i * n + p] * x[p];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in (i + 1)..n {
                s -= lu[i * n + p] * x[p];
            }
            x[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            out[i * n + j] = x[i];
        }
    }
    let norm1 = |m: &[C64]| {
        (0..n)
            .map(|j| (0..n).map(|i| math::sqrt(m[i * n + j].norm_sqr())).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let cond = norm1(a) * norm1(out);
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("lu_inverse"));
    }
    Ok(cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_cmat, rng};

    fn max_dev(a: &CMat, b: &CMat) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn inverse_of_identity_is_identity() {
        let i3 = CMat::identity(3);
        assert_eq!(i3.inverse().unwrap(), i3);
    }

    #[test]
    fn inverse_of_diagonal() {
        let d = CMat::diag_real(&[2.0, 4.0]);
        let inv = d.inverse().unwrap();
        assert!(max_dev(&inv, &CMat::diag_real(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn inverse_residual_random() {
        let mut r = rng(3);
        for _ in 0..20 {
            let mut a = rand_cmat(&mut r, 5, 5);
            a.add_diag(C64::new(3.0, 0.0));
            let inv = a.inverse().unwrap();
            let prod = inv.matmul(&a).unwrap();
            assert!(max_dev(&prod, &CMat::identity(5)) < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new((i + j) as f64, 0.0));
        assert!(matches!(a.inverse(), Err(Error::SingularMatrix { .. })));
        assert!(matches!(CMat::zeros(2, 2).inverse(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let d = CMat::diag_real(&[1.0, 1e-3]);
        let (_, cond) = d.inverse_with_cond().unwrap();
        assert!((cond - 1e3).abs() < 1e-9);
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let mut r = rng(5);
        for n in [1usize, 2, 4, 7] {
            let h = rand_cmat(&mut r, n + 2, n);
            let g = h.gram();
            let (vals, vecs) = g.hermitian_eig().unwrap();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let recon = vecs
                .matmul(&CMat::diag_real(&vals))
                .unwrap()
                .matmul(&vecs.adjoint())
                .unwrap();
            assert!(max_dev(&recon, &g) < 1e-10 * g.max_abs().max(1.0));
            let uu = vecs.adjoint().matmul(&vecs).unwrap();
            assert!(max_dev(&uu, &CMat::identity(n)) < 1e-12);
        }
    }

    #[test]
    fn qr_is_unitary_and_reconstructs() {
        let mut r = rng(8);
        let a = rand_cmat(&mut r, 6, 6);
        let (q, rr) = a.qr().unwrap();
        assert!(max_dev(&q.adjoint().matmul(&q).unwrap(), &CMat::identity(6)) < 1e-12);
        assert!(max_dev(&q.matmul(&rr).unwrap(), &a) < 1e-12);
    }
}
