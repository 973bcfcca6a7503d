//! Four-dimensional hierarchical Tucker tensors on the balanced tree
//! `{1,2,3,4} -> ({1,2}, {3,4})`.
//!
//! `f(x1,x2,x3,x4) = sum_{k,l} root[k,l] U12(x1,x2)_k U34(x3,x4)_l` with
//! `U12(x1,x2)_k = sum_{i,j} B12[i,j,k] U1(x1)_i U2(x2)_j` and likewise for
//! the `{3,4}` node.

use crate::dense::{self, DenseMatrix};
use crate::error::{Error, Result};
use crate::lowrank::{DimAction, LowRank2D};
use crate::par;

/// Order-three tensor stored column-major: `(i, j, k) -> i + d0 (j + d1 k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self {
            dims: [d0, d1, d2],
            data: vec![0.0; d0 * d1 * d2],
        }
    }

    pub fn from_data(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape {
                context: "Tensor3::from_data",
                expected: format!("{} entries", dims.iter().product::<usize>()),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { dims, data })
    }

    /// Reinterpret a `(d0 d1) x d2` matrix.
    pub fn from_matrix(d0: usize, d1: usize, m: DenseMatrix) -> Self {
        assert_eq!(m.rows(), d0 * d1, "from_matrix: row count");
        let d2 = m.cols();
        Self {
            dims: [d0, d1, d2],
            data: m.into_data(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[i + self.dims[0] * (j + self.dims[1] * k)] = v;
    }

    /// `(d0 d1) x d2` matricisation.
    pub fn matrix_12(&self) -> DenseMatrix {
        DenseMatrix::from_col_major(self.dims[0] * self.dims[1], self.dims[2], self.data.clone())
            .expect("consistent dims")
    }

    /// `d0 x (d1 d2)` matricisation.
    pub fn matrix_1(&self) -> DenseMatrix {
        DenseMatrix::from_col_major(self.dims[0], self.dims[1] * self.dims[2], self.data.clone())
            .expect("consistent dims")
    }

    /// `d1 x (d0 d2)` matricisation.
    pub fn matrix_2(&self) -> DenseMatrix {
        let [d0, d1, d2] = self.dims;
        DenseMatrix::from_fn(d1, d0 * d2, |j, c| self.get(c % d0, j, c / d0))
    }

    /// Mode-`mode` product with `m` (`new x old`).
    pub fn mode_mul(&self, mode: usize, m: &DenseMatrix) -> Tensor3 {
        let [d0, d1, d2] = self.dims;
        assert_eq!(m.cols(), self.dims[mode], "mode_mul: inner dimension");
        let p = m.rows();
        match mode {
            0 => {
                let out = m.matmul(&self.matrix_1());
                Tensor3 {
                    dims: [p, d1, d2],
                    data: out.into_data(),
                }
            }
            1 => {
                let mut out = Tensor3::zeros(d0, p, d2);
                for k in 0..d2 {
                    for j in 0..d1 {
                        let src = &self.data[d0 * (j + d1 * k)..d0 * (j + d1 * k + 1)];
                        for a in 0..p {
                            let w = m[(a, j)];
                            if w != 0.0 {
                                let dst = &mut out.data[d0 * (a + p * k)..d0 * (a + p * k + 1)];
                                dense::axpy(w, src, dst);
                            }
                        }
                    }
                }
                out
            }
            2 => {
                let out = self.matrix_12().matmul_t(m);
                Tensor3 {
                    dims: [d0, d1, p],
                    data: out.into_data(),
                }
            }
            _ => panic!("mode must be 0, 1 or 2"),
        }
    }
}

/// Ranks of every non-root node, ordered `[r1, r2, r3, r4, r12, r34]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HtRanks(pub [usize; 6]);

impl HtRanks {
    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HtTensor {
    leaves: [DenseMatrix; 4],
    b12: Tensor3,
    b34: Tensor3,
    root: DenseMatrix,
}

impl HtTensor {
    pub fn new(leaves: [DenseMatrix; 4], b12: Tensor3, b34: Tensor3, root: DenseMatrix) -> Result<Self> {
        let bad = |what: &str, exp: String, got: String| Error::Shape {
            context: "HtTensor::new",
            expected: format!("{what} {exp}"),
            found: got,
        };
        let [d0, d1, d2] = b12.dims();
        if d0 != leaves[0].cols() || d1 != leaves[1].cols() {
            return Err(bad(
                "B12",
                format!("{}x{}x_", leaves[0].cols(), leaves[1].cols()),
                format!("{d0}x{d1}x{d2}"),
            ));
        }
        let [e0, e1, e2] = b34.dims();
        if e0 != leaves[2].cols() || e1 != leaves[3].cols() {
            return Err(bad(
                "B34",
                format!("{}x{}x_", leaves[2].cols(), leaves[3].cols()),
                format!("{e0}x{e1}x{e2}"),
            ));
        }
        if root.rows() != d2 || root.cols() != e2 {
            return Err(bad(
                "root",
                format!("{d2}x{e2}"),
                format!("{}x{}", root.rows(), root.cols()),
            ));
        }
        Ok(Self { leaves, b12, b34, root })
    }

    /// Rank-one tensor `s * a ⊗ b ⊗ c ⊗ d`.
    pub fn from_separable(factors: [&[f64]; 4], s: f64) -> Self {
        Self {
            leaves: factors.map(DenseMatrix::column_vector),
            b12: Tensor3 {
                dims: [1, 1, 1],
                data: vec![1.0],
            },
            b34: Tensor3 {
                dims: [1, 1, 1],
                data: vec![1.0],
            },
            root: DenseMatrix::from_col_major(1, 1, vec![s]).expect("1x1"),
        }
    }

    /// Tensor with the `{1,2}` part given by a factored 2D function and the
    /// `{3,4}` part by another: `f = g(x1,x2) h(x3,x4)`.
    pub fn from_product(g: &LowRank2D, h: &LowRank2D) -> Self {
        let (r1, r2) = g.ranks();
        let (r3, r4) = h.ranks();
        Self {
            leaves: [g.u1().clone(), g.u2().clone(), h.u1().clone(), h.u2().clone()],
            b12: Tensor3 {
                dims: [r1, r2, 1],
                data: g.core().data().to_vec(),
            },
            b34: Tensor3 {
                dims: [r3, r4, 1],
                data: h.core().data().to_vec(),
            },
            root: DenseMatrix::from_col_major(1, 1, vec![1.0]).expect("1x1"),
        }
    }

    pub fn leaf(&self, mu: usize) -> &DenseMatrix {
        &self.leaves[mu]
    }

    pub fn b12(&self) -> &Tensor3 {
        &self.b12
    }

    pub fn b34(&self) -> &Tensor3 {
        &self.b34
    }

    pub fn root(&self) -> &DenseMatrix {
        &self.root
    }

    pub fn dims(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|m| self.leaves[m].rows())
    }

    pub fn ranks(&self) -> HtRanks {
        HtRanks([
            self.leaves[0].cols(),
            self.leaves[1].cols(),
            self.leaves[2].cols(),
            self.leaves[3].cols(),
            self.root.rows(),
            self.root.cols(),
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.leaves.iter().all(DenseMatrix::is_finite)
            && self.b12.data.iter().all(|x| x.is_finite())
            && self.b34.data.iter().all(|x| x.is_finite())
            && self.root.is_finite()
    }

    pub fn scale(&mut self, s: f64) {
        self.root.scale(s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut t = self.clone();
        t.scale(s);
        t
    }

    /// Exact sum with block-diagonal transfer tensors (ranks add).
    pub fn add(&self, other: &HtTensor) -> Result<HtTensor> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                context: "HtTensor::add",
                expected: format!("{:?}", self.dims()),
                found: format!("{:?}", other.dims()),
            });
        }
        let leaves = [0, 1, 2, 3].map(|m| DenseMatrix::hcat(&[&self.leaves[m], &other.leaves[m]]));
        let b12 = block_diag3(&self.b12, &other.b12);
        let b34 = block_diag3(&self.b34, &other.b34);
        let root = DenseMatrix::block_diag(&[&self.root, &other.root]);
        HtTensor::new(leaves, b12, b34, root)
    }

    /// Apply a one-dimensional action to every frame column of leaf `mu`.
    pub fn apply_leaf(&self, mu: usize, action: &DimAction) -> Result<HtTensor> {
        if mu >= 4 {
            return Err(Error::InvalidInput(format!("leaf index {mu} out of range")));
        }
        let mut t = self.clone();
        t.leaves[mu] = action.apply_cols(&self.leaves[mu])?;
        Ok(t)
    }

    /// Pointwise product with a function of `(x1, x2)` only.
    pub fn hadamard_x12(&self, e: &LowRank2D) -> Result<HtTensor> {
        let [n1, n2, _, _] = self.dims();
        if e.n1() != n1 || e.n2() != n2 {
            return Err(Error::Shape {
                context: "HtTensor::hadamard_x12",
                expected: format!("{n1}x{n2} field"),
                found: format!("{}x{}", e.n1(), e.n2()),
            });
        }
        let (p1, p2) = e.ranks();
        let [r1, r2, r12] = self.b12.dims();
        let kron = |u: &DenseMatrix, f: &DenseMatrix| {
            let r = u.cols();
            let mut out = DenseMatrix::zeros(u.rows(), r * f.cols());
            for a in 0..f.cols() {
                for i in 0..r {
                    let dst = out.col_mut(i + r * a);
                    for ((d, x), y) in dst.iter_mut().zip(u.col(i)).zip(f.col(a)) {
                        *d = x * y;
                    }
                }
            }
            out
        };
        let l1 = kron(&self.leaves[0], e.u1());
        let l2 = kron(&self.leaves[1], e.u2());
        let c = e.core();
        let mut b = Tensor3::zeros(r1 * p1, r2 * p2, r12);
        for k in 0..r12 {
            for bq in 0..p2 {
                for j in 0..r2 {
                    for a in 0..p1 {
                        let cab = c[(a, bq)];
                        for i in 0..r1 {
                            b.set(i + r1 * a, j + r2 * bq, k, self.b12.get(i, j, k) * cab);
                        }
                    }
                }
            }
        }
        let mut t = self.clone();
        t.leaves[0] = l1;
        t.leaves[1] = l2;
        t.b12 = b;
        Ok(t)
    }

    /// Reverse the grid order of leaves 3 and 4, i.e. `f(x, v) -> f(x, -v)`
    /// on a grid symmetric about zero.
    pub fn flip_34(&self) -> HtTensor {
        let mut t = self.clone();
        for mu in [2, 3] {
            let u = &self.leaves[mu];
            let n = u.rows();
            t.leaves[mu] = DenseMatrix::from_fn(n, u.cols(), |i, j| u[(n - 1 - i, j)]);
        }
        t
    }

    /// Weighted sums over dimensions 3 and 4, leaving a function of `(x1, x2)`.
    pub fn contract_34(&self, w3: &[f64], w4: &[f64]) -> Result<LowRank2D> {
        let [_, _, n3, n4] = self.dims();
        if w3.len() != n3 || w4.len() != n4 {
            return Err(Error::Shape {
                context: "HtTensor::contract_34",
                expected: format!("weights of length {n3}, {n4}"),
                found: format!("{}, {}", w3.len(), w4.len()),
            });
        }
        let s3 = self.leaves[2].t_matmul(&DenseMatrix::column_vector(w3));
        let s4 = self.leaves[3].t_matmul(&DenseMatrix::column_vector(w4));
        let t34 = self.b34.mode_mul(0, &s3.transpose()).mode_mul(1, &s4.transpose());
        let t34 = DenseMatrix::column_vector(t34.data());
        let g = self.root.matmul(&t34);
        let core = self.b12.matrix_12().matmul(&g);
        let [r1, r2, _] = self.b12.dims();
        let core = DenseMatrix::from_col_major(r1, r2, core.into_data())?;
        LowRank2D::new(self.leaves[0].clone(), core, self.leaves[1].clone())
    }

    /// Weighted sum over all four dimensions.
    pub fn weighted_sum(&self, w: [&[f64]; 4]) -> Result<f64> {
        let g = self.contract_34(w[2], w[3])?;
        Ok(g.weighted_sum(w[0], w[1]))
    }

    /// Frobenius inner product of the grid values.
    pub fn inner(&self, other: &HtTensor) -> f64 {
        let m: Vec<DenseMatrix> = (0..4).map(|mu| self.leaves[mu].t_matmul(&other.leaves[mu])).collect();
        let node = |ba: &Tensor3, bb: &Tensor3, ma: &DenseMatrix, mb: &DenseMatrix| {
            let t = bb.mode_mul(0, ma).mode_mul(1, mb);
            ba.matrix_12().t_matmul(&t.matrix_12())
        };
        let m12 = node(&self.b12, &other.b12, &m[0], &m[1]);
        let m34 = node(&self.b34, &other.b34, &m[2], &m[3]);
        let t = m12.matmul(&other.root).matmul_t(&m34);
        dense::dot(self.root.data(), t.data())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// Full grid values in row-major order (`x4` fastest).
    pub fn to_dense(&self) -> Vec<f64> {
        self.reconstruct_with(&[
            self.leaves[0].clone(),
            self.leaves[1].clone(),
            self.leaves[2].clone(),
            self.leaves[3].clone(),
        ])
    }

    /// Two-dimensional section over dimensions `free.0 < free.1`; the other
    /// two dimensions are contracted with the given weight vectors (in
    /// increasing dimension order). Point evaluation uses unit vectors.
    /// Returned row-major, `free.0` slow.
    pub fn section(&self, free: (usize, usize), weights: [&[f64]; 2]) -> Result<DenseMatrix> {
        let (a, b) = free;
        if !(a < b && b < 4) {
            return Err(Error::InvalidInput(format!("bad free dimensions {free:?}")));
        }
        let mut frames: Vec<DenseMatrix> = self.leaves.to_vec();
        let mut wi = 0;
        for (mu, frame) in frames.iter_mut().enumerate() {
            if mu != a && mu != b {
                let w = weights[wi];
                wi += 1;
                if w.len() != self.leaves[mu].rows() {
                    return Err(Error::Shape {
                        context: "HtTensor::section",
                        expected: format!("weight length {}", self.leaves[mu].rows()),
                        found: format!("{}", w.len()),
                    });
                }
                *frame = DenseMatrix::column_vector(w).t_matmul(&self.leaves[mu]);
            }
        }
        let frames: [DenseMatrix; 4] = frames.try_into().expect("four frames");
        let vals = self.reconstruct_with(&frames);
        let (na, nb) = (self.leaves[a].rows(), self.leaves[b].rows());
        Ok(DenseMatrix::from_fn(na, nb, |i, j| vals[i * nb + j]))
    }

    /// Dense evaluation with substitute frames (same column counts).
    fn reconstruct_with(&self, frames: &[DenseMatrix; 4]) -> Vec<f64> {
        let n: Vec<usize> = frames.iter().map(DenseMatrix::rows).collect();
        let u12 = self.b12.mode_mul(0, &frames[0]).mode_mul(1, &frames[1]).matrix_12();
        let u34 = self.b34.mode_mul(0, &frames[2]).mode_mul(1, &frames[3]).matrix_12();
        // rows: x1 + n1 x2, cols: x3 + n3 x4
        let m = u12.matmul(&self.root).matmul_t(&u34);
        let mut out = vec![0.0; n.iter().product()];
        for x4 in 0..n[3] {
            for x3 in 0..n[2] {
                let col = m.col(x3 + n[2] * x4);
                for x2 in 0..n[1] {
                    for x1 in 0..n[0] {
                        out[((x1 * n[1] + x2) * n[2] + x3) * n[3] + x4] = col[x1 + n[0] * x2];
                    }
                }
            }
        }
        out
    }

    /// Recompress with relative accuracy `eps`.
    pub fn truncate(&self, eps: f64, r_max: usize) -> Result<HtTensor> {
        truncate_sum(&[(1.0, self)], eps, r_max)
    }

    /// Binary dump of all factors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HT_MAGIC);
        out.extend_from_slice(&HT_VERSION.to_le_bytes());
        for d in self.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for r in self.ranks().0 {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for l in &self.leaves {
            put(l.data());
        }
        put(self.b12.data());
        put(self.b34.data());
        put(self.root.data());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<HtTensor> {
        let mut rd = Reader { b: bytes, pos: 0 };
        if rd.take(4)? != HT_MAGIC {
            return Err(Error::Format("bad tensor magic".into()));
        }
        let version = rd.u32()?;
        if version != HT_VERSION {
            return Err(Error::Format(format!("unsupported tensor version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = rd.u32()? as usize;
        }
        let mut r = [0usize; 6];
        for x in &mut r {
            *x = rd.u32()? as usize;
        }
        let mut leaves = Vec::with_capacity(4);
        for mu in 0..4 {
            leaves.push(DenseMatrix::from_col_major(
                dims[mu],
                r[mu],
                rd.f64s(dims[mu] * r[mu])?,
            )?);
        }
        let b12 = Tensor3::from_data([r[0], r[1], r[4]], rd.f64s(r[0] * r[1] * r[4])?)?;
        let b34 = Tensor3::from_data([r[2], r[3], r[5]], rd.f64s(r[2] * r[3] * r[5])?)?;
        let root = DenseMatrix::from_col_major(r[4], r[5], rd.f64s(r[4] * r[5])?)?;
        if rd.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after tensor".into()));
        }
        let leaves: [DenseMatrix; 4] = leaves.try_into().expect("four leaves");
        HtTensor::new(leaves, b12, b34, root)
    }
}

const HT_MAGIC: &[u8; 4] = b"LRHT";
const HT_VERSION: u32 = 1;

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn block_diag3(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let [a0, a1, a2] = a.dims;
    let [b0, b1, b2] = b.dims;
    let mut out = Tensor3::zeros(a0 + b0, a1 + b1, a2 + b2);
    for k in 0..a2 {
        for j in 0..a1 {
            for i in 0..a0 {
                out.set(i, j, k, a.get(i, j, k));
            }
        }
    }
    for k in 0..b2 {
        for j in 0..b1 {
            for i in 0..b0 {
                out.set(a0 + i, a1 + j, a2 + k, b.get(i, j, k));
            }
        }
    }
    out
}

/// Number of independent truncation sites for `d = 4` (`2d - 3`).
const TRUNCATION_SITES: f64 = 5.0;

/// Recompress `sum_k s_k a_k` without forming the block-diagonal sum.
///
/// The frames of all summands are orthogonalised together, the transfer
/// tensors are orthogonalised bottom-up, and every node is then truncated
/// from the left singular vectors of its reduced Gramian (computed in
/// square-root form). Each node may discard at most `eps ||sum|| / sqrt(5)`,
/// so the total error is at most `eps ||sum||` unless `r_max` binds.
pub fn truncate_sum(terms: &[(f64, &HtTensor)], eps: f64, r_max: usize) -> Result<HtTensor> {
    let Some(&(_, first)) = terms.first() else {
        return Err(Error::InvalidInput("empty tensor sum".into()));
    };
    let dims = first.dims();
    for (_, t) in terms {
        if t.dims() != dims {
            return Err(Error::Shape {
                context: "truncate_sum",
                expected: format!("{dims:?}"),
                found: format!("{:?}", t.dims()),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("truncate_sum input"));
        }
    }
    let r_max = r_max.max(1);

    // Leaves: joint QR of the concatenated frames.
    let leaf_qr = par::map_range(4, usize::MAX / 8, |mu| {
        let blocks: Vec<&DenseMatrix> = terms.iter().map(|(_, t)| &t.leaves[mu]).collect();
        dense::qr(&DenseMatrix::hcat(&blocks))
    });
    let mut leaf_q = Vec::with_capacity(4);
    let mut leaf_r = Vec::with_capacity(4);
    for res in leaf_qr {
        let qr = res?;
        leaf_q.push(qr.q);
        leaf_r.push(qr.r);
    }
    let r_block = |mu: usize, k: usize| -> DenseMatrix {
        let off: usize = terms[..k].iter().map(|(_, t)| t.leaves[mu].cols()).sum();
        leaf_r[mu].columns(off, off + terms[k].1.leaves[mu].cols())
    };

    // Interior nodes: push leaf R factors in, concatenate along the parent
    // mode, orthogonalise.
    let node = |left: usize, right: usize, pick: fn(&HtTensor) -> &Tensor3| -> Result<(Tensor3, Vec<DenseMatrix>)> {
        let pushed = par::map_range(terms.len(), 1 << 16, |k| {
            pick(terms[k].1)
                .mode_mul(0, &r_block(left, k))
                .mode_mul(1, &r_block(right, k))
        });
        let (m0, m1) = (leaf_q[left].cols(), leaf_q[right].cols());
        let mut data = Vec::new();
        let mut widths = Vec::with_capacity(terms.len());
        for t in &pushed {
            data.extend_from_slice(t.data());
            widths.push(t.dims()[2]);
        }
        let total: usize = widths.iter().sum();
        let qr = dense::qr(&DenseMatrix::from_col_major(m0 * m1, total, data)?)?;
        let mut rs = Vec::with_capacity(terms.len());
        let mut off = 0;
        for w in widths {
            rs.push(qr.r.columns(off, off + w));
            off += w;
        }
        Ok((Tensor3::from_matrix(m0, m1, qr.q), rs))
    };
    let (b12, r12) = node(0, 1, |t| &t.b12)?;
    let (b34, r34) = node(2, 3, |t| &t.b34)?;

    let mut root = DenseMatrix::zeros(b12.dims()[2], b34.dims()[2]);
    for (k, (s, t)) in terms.iter().enumerate() {
        root.add_scaled(*s, &r12[k].matmul(&t.root).matmul_t(&r34[k]));
    }

    // Orthogonal representation established; the norm is the root's.
    let rs = dense::svd(&root)?;
    let norm = rs.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = eps * norm / TRUNCATION_SITES.sqrt();
    let k_root = dense::truncation_rank_abs(&rs.s, tol, r_max).min(rs.s.len().max(1));

    // Gramian square roots of the children: B ×3 (W Σ)ᵀ. Root directions
    // whose combined weight is below `delta` are left out; the leaf
    // tolerance shrinks so that the total still respects `tol`.
    let delta = 0.1 * tol;
    let k_gram = dense::truncation_rank_abs(&rs.s, delta, usize::MAX).min(rs.s.len().max(1));
    let leaf_tol = (tol * tol - delta * delta).sqrt();
    let ws = scale_cols(&rs.u, &rs.s[..k_gram]);
    let zs = scale_cols(&rs.v, &rs.s[..k_gram]);
    let y12 = b12.mode_mul(2, &ws.transpose());
    let y34 = b34.mode_mul(2, &zs.transpose());
    let leaf_basis = par::map_range(4, usize::MAX / 8, |mu| -> Result<DenseMatrix> {
        let y = match mu {
            0 => y12.matrix_1(),
            1 => y12.matrix_2(),
            2 => y34.matrix_1(),
            _ => y34.matrix_2(),
        };
        let d = dense::svd(&y)?;
        let k = dense::truncation_rank_abs(&d.s, leaf_tol, r_max).min(d.s.len().max(1));
        Ok(d.u.columns(0, k))
    });
    let mut s_leaf = Vec::with_capacity(4);
    for b in leaf_basis {
        s_leaf.push(b?);
    }

    let s12 = rs.u.columns(0, k_root);
    let s34 = rs.v.columns(0, k_root);
    let b12 = b12
        .mode_mul(0, &s_leaf[0].transpose())
        .mode_mul(1, &s_leaf[1].transpose())
        .mode_mul(2, &s12.transpose());
    let b34 = b34
        .mode_mul(0, &s_leaf[2].transpose())
        .mode_mul(1, &s_leaf[3].transpose())
        .mode_mul(2, &s34.transpose());
    let mut root = DenseMatrix::diag(&rs.s[..k_root]);

    // Restore orthonormal transfer matricisations.
    let [k1, k2, _] = b12.dims();
    let q12 = dense::qr(&b12.matrix_12())?;
    root = q12.r.matmul(&root);
    let [k3, k4, _] = b34.dims();
    let q34 = dense::qr(&b34.matrix_12())?;
    root = root.matmul_t(&q34.r);

    let leaves: Vec<DenseMatrix> = (0..4).map(|mu| leaf_q[mu].matmul(&s_leaf[mu])).collect();
    let leaves: [DenseMatrix; 4] = leaves.try_into().expect("four leaves");
    HtTensor::new(
        leaves,
        Tensor3::from_matrix(k1, k2, q12.q),
        Tensor3::from_matrix(k3, k4, q34.q),
        root,
    )
}

fn scale_cols(m: &DenseMatrix, s: &[f64]) -> DenseMatrix {
    let mut out = m.columns(0, s.len().min(m.cols()));
    for (j, &x) in s.iter().enumerate().take(out.cols()) {
        out.col_mut(j).iter_mut().for_each(|v| *v *= x);
    }
    out
}
