//! Small dense linear algebra: a column-major matrix type, Householder QR,
//! one-sided Jacobi SVD, a symmetric tridiagonal eigensolver and the
//! truncation-rank rule shared by every compression routine.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::par;

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Wrap column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "DenseMatrix::from_col_major",
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from row slices; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    /// Build from equally long columns.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let rows = cols.first().map_or(0, |c| c.len());
        assert!(cols.iter().all(|c| c.len() == rows), "ragged columns");
        let data = cols.iter().flat_map(|c| c.iter().copied()).collect();
        Self {
            rows,
            cols: cols.len(),
            data,
        }
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        Self {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Self {
        Self::from_fn(end - start, self.cols, |i, j| self[(start + i, j)])
    }

    /// `self * b`.
    pub fn matmul(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, b.rows, "matmul: inner dimensions differ");
        let k = self.cols;
        product(self, (1, self.rows), b, (1, k), self.rows, k, b.cols)
    }

    /// `selfᵀ * b`.
    pub fn t_matmul(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, b.rows, "t_matmul: row counts differ");
        let k = self.rows;
        product(self, (k, 1), b, (1, k), self.cols, k, b.cols)
    }

    /// `self * bᵀ`.
    pub fn matmul_t(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, b.cols, "matmul_t: column counts differ");
        let n = b.rows;
        product(self, (1, self.rows), b, (n, 1), self.rows, self.cols, n)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &DenseMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_scaled: shapes differ");
        axpy(s, &other.data, &mut self.data);
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Horizontal concatenation.
    pub fn hcat(blocks: &[&DenseMatrix]) -> DenseMatrix {
        let rows = blocks.first().map_or(0, |b| b.rows);
        assert!(blocks.iter().all(|b| b.rows == rows), "hcat: row counts differ");
        let mut data = Vec::with_capacity(rows * blocks.iter().map(|b| b.cols).sum::<usize>());
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        let cols = data.len() / rows.max(1);
        DenseMatrix {
            rows,
            cols: if rows == 0 {
                blocks.iter().map(|b| b.cols).sum()
            } else {
                cols
            },
            data,
        }
    }

    /// Block-diagonal matrix with the given blocks.
    pub fn block_diag(blocks: &[&DenseMatrix]) -> DenseMatrix {
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = DenseMatrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for j in 0..b.cols {
                out.col_mut(c0 + j)[r0..r0 + b.rows].copy_from_slice(b.col(j));
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `c += alpha * A * B` on strided column-major views, with `A` of shape
/// `m x k`, `B` of shape `k x n` and `c` of shape `m x n` (leading dimension `ldc`).
/// Strides are `(row, column)` in elements.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let last = |s: (usize, usize), r: usize, c: usize| (r - 1) * s.0 + (c - 1) * s.1;
    assert!(last(sa, m, k) < a.len() && last(sb, k, n) < b.len() && (n - 1) * ldc + m <= c.len());
    // SAFETY: the bounds check above covers every element addressed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            1.0,
            c.as_mut_ptr(),
            1,
            ldc as isize,
        );
    }
}

/// `op(a) * op(b)` where the strides select the transposition; output columns
/// are computed in parallel blocks.
fn product(
    a: &DenseMatrix,
    sa: (usize, usize),
    b: &DenseMatrix,
    sb: (usize, usize),
    m: usize,
    k: usize,
    n: usize,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m, n);
    if m == 0 || n == 0 {
        return out;
    }
    let block = 64.min(n);
    par::for_each_chunk(&mut out.data, m * block, m * k * block, |j, c| {
        let j0 = j * block;
        let w = c.len() / m;
        gemm_acc(m, k, w, 1.0, &a.data, sa, &b.data[j0 * sb.1..], sb, c, m);
    });
    out
}

/// Panel width of the blocked QR.
const QR_BLOCK: usize = 32;

/// Householder vectors of one panel starting at row and column `j0`, stored
/// as the columns of `v` (`(m - j0) x b`, zero above each vector's start),
/// with the upper-triangular `t` of the compact form `H_1 ... H_b = I - V T Vᵀ`.
struct Panel {
    j0: usize,
    v: DenseMatrix,
    t: DenseMatrix,
}

impl Panel {
    /// `c <- (I - V T Vᵀ) c` (`transpose = false`) or `(I - V Tᵀ Vᵀ) c`,
    /// for the block of `w` at rows `j0..` and columns `cols`.
    fn apply(&self, w: &mut DenseMatrix, cols: std::ops::Range<usize>, transpose: bool) {
        let (rows, ld) = (w.rows - self.j0, w.rows);
        let nc = cols.len();
        let b = self.v.cols;
        if nc == 0 || b == 0 {
            return;
        }
        let off = cols.start * ld + self.j0;
        let mut vc = DenseMatrix::zeros(b, nc);
        gemm_acc(
            b,
            rows,
            nc,
            1.0,
            &self.v.data,
            (rows, 1),
            &w.data[off..],
            (1, ld),
            &mut vc.data,
            b,
        );
        let tvc = if transpose {
            self.t.t_matmul(&vc)
        } else {
            self.t.matmul(&vc)
        };
        gemm_acc(
            rows,
            b,
            nc,
            -1.0,
            &self.v.data,
            (1, rows),
            &tvc.data,
            (1, b),
            &mut w.data[off..],
            ld,
        );
    }
}

/// In-place blocked Householder factorisation of `w`; on return the upper
/// triangle holds `r` (diagonal of either sign) and the panels describe `q`.
fn householder_blocked(w: &mut DenseMatrix) -> Vec<Panel> {
    let (m, n) = w.shape();
    let k = m.min(n);
    let mut panels = Vec::new();
    let mut j0 = 0;
    while j0 < k {
        let j1 = (j0 + QR_BLOCK).min(k);
        let b = j1 - j0;
        let rows = m - j0;
        let mut v = DenseMatrix::zeros(rows, b);
        let mut betas = vec![0.0; b];
        for j in j0..j1 {
            let x = &w.col(j)[j..];
            let nx = norm2(x);
            if nx == 0.0 {
                continue;
            }
            let alpha = if x[0] > 0.0 { -nx } else { nx };
            let mut h = x.to_vec();
            h[0] -= alpha;
            let hh = dot(&h, &h);
            if hh == 0.0 {
                continue;
            }
            let beta = 2.0 / hh;
            for c in j + 1..j1 {
                let seg = &mut w.col_mut(c)[j..];
                let s = beta * dot(&h, seg);
                axpy(-s, &h, seg);
            }
            let cj = w.col_mut(j);
            cj[j] = alpha;
            cj[j + 1..].iter_mut().for_each(|x| *x = 0.0);
            v.col_mut(j - j0)[j - j0..].copy_from_slice(&h);
            betas[j - j0] = beta;
        }
        let mut t = DenseMatrix::zeros(b, b);
        for i in 0..b {
            t[(i, i)] = betas[i];
            if i > 0 && betas[i] != 0.0 {
                let z: Vec<f64> = (0..i).map(|p| dot(v.col(p), v.col(i))).collect();
                for r in 0..i {
                    let s: f64 = (r..i).map(|c| t[(r, c)] * z[c]).sum();
                    t[(r, i)] = -betas[i] * s;
                }
            }
        }
        let panel = Panel { j0, v, t };
        panel.apply(w, j1..n, true);
        panels.push(panel);
        j0 = j1;
    }
    panels
}

/// Explicit `m x k` orthonormal factor from the panels.
fn form_q(m: usize, k: usize, panels: &[Panel]) -> DenseMatrix {
    let mut q = DenseMatrix::from_fn(m, k, |i, j| if i == j { 1.0 } else { 0.0 });
    for p in panels.iter().rev() {
        p.apply(&mut q, p.j0..k, false);
    }
    q
}

/// Thin QR factors: `q` has orthonormal columns and `r` is upper triangular
/// with a nonnegative diagonal.
#[derive(Clone, Debug)]
pub struct Qr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Householder QR. For an `m x n` input, `q` is `m x k` and `r` is `k x n`
/// with `k = min(m, n)`.
pub fn qr(a: &DenseMatrix) -> Result<Qr> {
    if !a.is_finite() {
        return Err(Error::NonFinite("qr input"));
    }
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut w = a.clone();
    let panels = householder_blocked(&mut w);
    let mut r = DenseMatrix::from_fn(k, n, |i, j| if i <= j { w[(i, j)] } else { 0.0 });
    let mut q = form_q(m, k, &panels);
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
            q.col_mut(i).iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(Qr { q, r })
}

/// Apply `I - beta v vᵀ` (acting on rows `offset..`) to columns `first_col..` of `w`.
fn apply_reflector(w: &mut DenseMatrix, offset: usize, first_col: usize, v: &[f64], beta: f64) {
    let rows = w.rows;
    let tail = &mut w.data[first_col * rows..];
    par::for_each_chunk(tail, rows.max(1), 4 * v.len(), |_, c| {
        let seg = &mut c[offset..];
        let s = beta * dot(v, seg);
        if s != 0.0 {
            axpy(-s, v, seg);
        }
    });
}

/// Thin SVD `a = u diag(s) vᵀ` with singular values in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Singular value decomposition by one-sided Jacobi rotations, preceded by
/// a QR reduction when the input is rectangular.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    if n == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(m, 0),
            s: Vec::new(),
            v: DenseMatrix::zeros(0, 0),
        });
    }
    // Jacobi on the transposed triangular factor of a pivoted QR converges
    // in far fewer sweeps than on the raw matrix. Trailing rows of the factor
    // below roundoff are dropped; their singular values are zero.
    let (q, r, perm) = qr_pivoted(a)?;
    let k = numerical_rank(&r);
    let rk = DenseMatrix::from_fn(n, k, |i, j| r[(j, i)]);
    let inner = jacobi_columns(&rk)?;
    let mut ub = inner.u;
    if k < n {
        let mut w = ub.clone();
        let panels = householder_blocked(&mut w);
        let full = form_q(n, n, &panels);
        let mut data = ub.data;
        data.extend_from_slice(&full.data[k * n..]);
        ub = DenseMatrix::from_col_major(n, n, data)?;
    }
    let mut v = DenseMatrix::zeros(n, n);
    for (i, &p) in perm.iter().enumerate() {
        for j in 0..n {
            v[(p, j)] = ub[(i, j)];
        }
    }
    let mut u_data = q.columns(0, k).matmul(&inner.v).data;
    u_data.extend_from_slice(&q.data[k * m..]);
    let mut s = inner.s;
    s.resize(n, 0.0);
    Ok(Svd {
        u: DenseMatrix::from_col_major(m, n, u_data)?,
        s,
        v,
    })
}

/// Smallest `k` such that rows `k..` of the upper-triangular `r` are below
/// roundoff relative to the whole; at least 1.
fn numerical_rank(r: &DenseMatrix) -> usize {
    let n = r.rows().min(r.cols());
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let row: f64 = (i..r.cols()).map(|j| r[(i, j)] * r[(i, j)]).sum();
        tail[i] = tail[i + 1] + row;
    }
    let limit = (f64::EPSILON * f64::EPSILON) * tail[0];
    (1..=n).find(|&k| tail[k] <= limit).unwrap_or(n).max(1)
}

/// Householder QR with column pivoting, `a P = q r`, for `m >= n`.
/// Returns `q` (`m x n`), `r` (`n x n`) and the column order `perm`.
fn qr_pivoted(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, Vec<usize>)> {
    let (m, n) = a.shape();
    if m > n {
        // the triangular factor has the same column norms, so pivot on it
        let Qr { q: q0, r: r0 } = qr(a)?;
        let (q1, r, perm) = qr_pivoted(&r0)?;
        return Ok((q0.matmul(&q1), r, perm));
    }
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(n);
    for j in 0..n {
        let best = (j..n)
            .map(|c| (c, dot(&w.col(c)[j..], &w.col(c)[j..])))
            .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        if best != j {
            for i in 0..m {
                w.data.swap(j * m + i, best * m + i);
            }
            perm.swap(j, best);
        }
        let x = &w.col(j)[j..];
        let nx = norm2(x);
        if nx == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] > 0.0 { -nx } else { nx };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv == 0.0 {
            reflectors.push(None);
            continue;
        }
        let beta = 2.0 / vv;
        apply_reflector(&mut w, j, j, &v, beta);
        let cj = w.col_mut(j);
        cj[j] = alpha;
        cj[j + 1..].iter_mut().for_each(|x| *x = 0.0);
        reflectors.push(Some((v, beta)));
    }
    let r = DenseMatrix::from_fn(n, n, |i, j| if i <= j { w[(i, j)] } else { 0.0 });
    let mut q = DenseMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (j, refl) in reflectors.iter().enumerate().rev() {
        if let Some((v, beta)) = refl {
            apply_reflector(&mut q, j, 0, v, *beta);
        }
    }
    Ok((q, r, perm))
}

/// One-sided Jacobi on the columns of `a` (`m x n`): `a = u diag(s) vᵀ` with
/// `u` of size `m x n`.
fn jacobi_columns(a: &DenseMatrix) -> Result<Svd> {
    let n = a.cols();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let tol = f64::EPSILON * (n as f64).max(2.0);
    // columns below this squared norm are numerically zero and are left alone
    let floor = (1e-3 * f64::EPSILON * a.frobenius_norm()).powi(2);
    let mut converged = false;
    let mut off = 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        off = 0.0_f64;
        let mut sq: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j))).collect();
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || alpha <= floor || beta <= floor {
                    continue;
                }
                let scale = alpha.sqrt() * beta.sqrt();
                let rel = gamma.abs() / scale;
                if !(rel > tol) {
                    continue;
                }
                off = off.max(rel);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
                sq[p] = (alpha - t * gamma).max(0.0);
                sq[q] = beta + t * gamma;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi SVD",
            iterations: JACOBI_MAX_SWEEPS,
            residual: off,
        });
    }
    let norms: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = DenseMatrix::zeros(a.rows(), n);
    let mut vs = DenseMatrix::zeros(n, n);
    let smax = s.first().copied().unwrap_or(0.0);
    for (k, &j) in order.iter().enumerate() {
        vs.col_mut(k).copy_from_slice(v.col(j));
        if s[k] > 0.0 {
            let inv = 1.0 / s[k];
            u.col_mut(k).iter_mut().zip(w.col(j)).for_each(|(x, y)| *x = y * inv);
        }
    }
    // Columns belonging to tiny or zero singular values lose orthogonality
    // in the normalisation; re-orthogonalise them and complete the basis.
    let loose = smax * 1e-8;
    for k in 0..n {
        if s[k] <= loose {
            orthonormalize_against(&mut u, k);
        }
    }
    Ok(Svd { u, s, v: vs })
}

fn rotate_cols(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows;
    let (lo, hi) = m.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Make column `k` a unit vector orthogonal to columns `0..k`, replacing it
/// with the best-conditioned coordinate direction if it collapses.
fn orthonormalize_against(u: &mut DenseMatrix, k: usize) {
    let project = |u: &DenseMatrix, mut c: Vec<f64>| {
        for _ in 0..2 {
            for j in 0..k {
                let d = dot(u.col(j), &c);
                axpy(-d, u.col(j), &mut c);
            }
        }
        c
    };
    let mut best = project(u, u.col(k).to_vec());
    let mut best_norm = norm2(&best);
    if best_norm < 1e-3 {
        for e in 0..u.rows {
            let mut c = vec![0.0; u.rows];
            c[e] = 1.0;
            let c = project(u, c);
            let nc = norm2(&c);
            if nc > best_norm {
                best = c;
                best_norm = nc;
            }
        }
    }
    if best_norm > 0.0 {
        best.iter_mut().for_each(|x| *x /= best_norm);
    }
    u.col_mut(k).copy_from_slice(&best);
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in descending
/// order and the matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Householder tridiagonalisation followed by the implicit QL algorithm.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            context: "sym_eig",
            expected: "square matrix".into(),
            found: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("sym_eig input"));
    }
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    // Row-major working copy of the symmetric part.
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[(i, j)] + a[(j, i)])).collect())
        .collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, k| v[i][order[k]]);
    Ok(SymEig { values, vectors })
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for x in e.iter_mut().take(i) {
                *x = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NoConvergence {
                        what: "tridiagonal QL",
                        iterations: iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d.iter_mut().take(n).skip(l + 2) {
                    *x -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Smallest rank `r` whose discarded tail satisfies
/// `sqrt(sum_{k >= r} s_k^2) <= tol`, clamped to `[1, min(r_max, s.len())]`.
///
/// `s` must be sorted in descending order.
pub fn truncation_rank_abs(s: &[f64], tol: f64, r_max: usize) -> usize {
    let cap = r_max.min(s.len()).max(1);
    let tol2 = tol * tol;
    let mut tail = 0.0;
    let mut r = s.len();
    while r > 0 {
        let next = tail + s[r - 1] * s[r - 1];
        if next > tol2 {
            break;
        }
        tail = next;
        r -= 1;
    }
    r.clamp(1, cap)
}

/// Relative variant: the tail may carry at most `eps` of the total 2-norm.
pub fn truncation_rank(s: &[f64], eps: f64, r_max: usize) -> usize {
    let total = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    truncation_rank_abs(s, eps * total, r_max)
}
