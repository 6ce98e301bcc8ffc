//! Small dense linear algebra over row-major `f64` matrices.
//!
//! The simulator and the optimal-design baselines only ever touch matrices
//! of modest dimension (ambient dimensions in the tens to low hundreds), so
//! everything here favors robustness and determinism over asymptotics:
//! one-sided Jacobi for the SVD, cyclic Jacobi for symmetric eigenvalues,
//! modified Gram-Schmidt with re-orthogonalization for QR, and Gauss-Jordan
//! with partial pivoting for explicit inverses.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, a: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, a: Vec<f64>) -> Self {
        assert_eq!(a.len(), rows * cols, "buffer length must be rows*cols");
        Mat { rows, cols, a }
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.a[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.a[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.a
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.a[c * self.rows + r] = self.a[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let lhs = self.row(r);
            let dst = &mut out.a[r * other.cols..(r + 1) * other.cols];
            for (k, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let src = &other.a[k * other.cols..(k + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d += l * s;
                }
            }
        }
        out
    }

    /// `self^T * other`
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let lhs = self.row(k);
            let rhs = other.row(k);
            for (c, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let dst = &mut out.a[c * other.cols..(c + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(rhs.iter()) {
                    *d += l * s;
                }
            }
        }
        out
    }

    /// `self * other^T`
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let lhs = self.row(r);
            for c in 0..other.rows {
                out.a[r * other.rows + c] = dot(lhs, other.row(c));
            }
        }
        out
    }

    /// `y = self * x` for a vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self += s * other`, element-wise.
    pub fn add_scaled(&mut self, other: &Mat, s: f64) {
        assert_eq!(self.a.len(), other.a.len(), "add_scaled shape mismatch");
        for (d, &o) in self.a.iter_mut().zip(other.a.iter()) {
            *d += s * o;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.a {
            *v *= s;
        }
    }

    pub fn trace(&self) -> f64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.a[i * self.cols + i]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        libm::sqrt(self.a.iter().map(|v| v * v).sum())
    }

    /// Frobenius inner product `<self, other> = sum_ij self_ij * other_ij`.
    pub fn frob_inner(&self, other: &Mat) -> f64 {
        assert_eq!(self.a.len(), other.a.len(), "frob_inner shape mismatch");
        self.a.iter().zip(other.a.iter()).map(|(&x, &y)| x * y).sum()
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|` (square matrices).
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let gap = (self.get(r, c) - self.get(c, r)).abs();
                if gap > worst {
                    worst = gap;
                }
            }
        }
        worst
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y.iter()).map(|(&a, &b)| a * b).sum()
}

/// Accumulate the outer product `acc += x * y^T`.
pub fn add_outer(acc: &mut Mat, x: &[f64], y: &[f64], scale: f64) {
    debug_assert_eq!(acc.rows(), x.len());
    debug_assert_eq!(acc.cols(), y.len());
    let cols = acc.cols();
    for (r, &xv) in x.iter().enumerate() {
        let s = scale * xv;
        if s == 0.0 {
            continue;
        }
        let dst = &mut acc.data_mut()[r * cols..(r + 1) * cols];
        for (d, &yv) in dst.iter_mut().zip(y.iter()) {
            *d += s * yv;
        }
    }
}

/// Singular value decomposition `a = u * diag(s) * v^T` with `s` descending.
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD.
///
/// Works on a copy of `a`; columns of the work matrix are iteratively
/// orthogonalized by plane rotations which are mirrored into `v`. Handles
/// any shape by transposing internally so the work matrix is tall.
pub fn svd(a: &Mat) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let m = a.rows;
    let n = a.cols;
    let mut u = a.clone();
    let mut v = Mat::identity(n);

    let eps = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0f64;
                let mut beta = 0.0f64;
                let mut gamma = 0.0f64;
                for i in 0..m {
                    let up = u.a[i * n + p];
                    let uq = u.a[i * n + q];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma.abs() <= eps * libm::sqrt(alpha * beta) || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = {
                    let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let up = u.a[i * n + p];
                    let uq = u.a[i * n + q];
                    u.a[i * n + p] = c * up - s * uq;
                    u.a[i * n + q] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v.a[i * n + p];
                    let vq = v.a[i * n + q];
                    v.a[i * n + p] = c * vp - s * vq;
                    v.a[i * n + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let s: Vec<f64> = (0..n)
        .map(|j| libm::sqrt((0..m).map(|i| u.a[i * n + j] * u.a[i * n + j]).sum()))
        .collect();
    // Normalize the left vectors; zero singular values leave a zero column.
    for j in 0..n {
        if s[j] > 0.0 {
            let inv = 1.0 / s[j];
            for i in 0..m {
                u.a[i * n + j] *= inv;
            }
        }
    }
    // Sort triplets by descending singular value (stable on ties).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap().then(i.cmp(&j)));
    let mut us = Mat::zeros(m, n);
    let mut vs = Mat::zeros(n, n);
    let mut ss = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = s[src];
        for i in 0..m {
            us.a[i * n + dst] = u.a[i * n + src];
        }
        for i in 0..n {
            vs.a[i * n + dst] = v.a[i * n + src];
        }
    }
    Svd { u: us, s: ss, v: vs }
}

/// Rank-`r` truncation `sum_{i<r} s_i u_i v_i^T` of a decomposition.
pub fn truncated_product(svd: &Svd, r: usize) -> Mat {
    let m = svd.u.rows();
    let n = svd.v.rows();
    let k = r.min(svd.s.len());
    let mut out = Mat::zeros(m, n);
    for t in 0..k {
        let s = svd.s[t];
        if s == 0.0 {
            continue;
        }
        for i in 0..m {
            let ui = s * svd.u.get(i, t);
            if ui == 0.0 {
                continue;
            }
            let dst = &mut out.a[i * n..(i + 1) * n];
            for (j, d) in dst.iter_mut().enumerate() {
                *d += ui * svd.v.get(j, t);
            }
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, descending order.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    assert_eq!(a.rows, a.cols, "sym_eigenvalues needs a square matrix");
    let n = a.rows;
    let mut w = a.clone();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off += w.get(r, c) * w.get(r, c);
            }
        }
        if libm::sqrt(off) <= 1e-14 * (1.0 + w.frob_norm()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, c * wip - s * wiq);
                    w.set(i, q, s * wip + c * wiq);
                }
                for i in 0..n {
                    let wpi = w.get(p, i);
                    let wqi = w.get(q, i);
                    w.set(p, i, c * wpi - s * wqi);
                    w.set(q, i, s * wpi + c * wqi);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Mat) -> f64 {
    svd(a).s.iter().sum()
}

/// Largest singular value.
pub fn operator_norm(a: &Mat) -> f64 {
    svd(a).s.first().copied().unwrap_or(0.0)
}

/// Orthonormalize the columns of `m` in place (modified Gram-Schmidt with a
/// second projection pass). Requires full column rank.
pub fn orthonormalize_columns(m: &mut Mat) -> Result<()> {
    let rows = m.rows;
    let cols = m.cols;
    let mut col = vec![0.0f64; rows];
    for j in 0..cols {
        for i in 0..rows {
            col[i] = m.get(i, j);
        }
        for _pass in 0..2 {
            for k in 0..j {
                let mut proj = 0.0;
                for i in 0..rows {
                    proj += m.get(i, k) * col[i];
                }
                for i in 0..rows {
                    col[i] -= proj * m.get(i, k);
                }
            }
        }
        let norm = libm::sqrt(col.iter().map(|v| v * v).sum());
        if norm < 1e-12 {
            return Err(Error::InvalidShape(alloc::format!(
                "column {j} is linearly dependent; cannot orthonormalize"
            )));
        }
        for i in 0..rows {
            m.set(i, j, col[i] / norm);
        }
    }
    Ok(())
}

/// Explicit inverse by Gauss-Jordan with partial pivoting.
pub fn invert(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols, "invert needs a square matrix");
    let n = a.rows;
    let mut w = a.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = w.get(col, col).abs();
        for r in (col + 1)..n {
            let v = w.get(r, col).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::SingularDowndate { denom: best });
        }
        if pivot != col {
            for c in 0..n {
                let t = w.get(col, c);
                w.set(col, c, w.get(pivot, c));
                w.set(pivot, c, t);
                let t = inv.get(col, c);
                inv.set(col, c, inv.get(pivot, c));
                inv.set(pivot, c, t);
            }
        }
        let p = w.get(col, col);
        let ip = 1.0 / p;
        for c in 0..n {
            w.set(col, c, w.get(col, c) * ip);
            inv.set(col, c, inv.get(col, c) * ip);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = w.get(r, col);
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                let wv = w.get(r, c) - f * w.get(col, c);
                w.set(r, c, wv);
                let iv = inv.get(r, c) - f * inv.get(col, c);
                inv.set(r, c, iv);
            }
        }
    }
    Ok(inv)
}
