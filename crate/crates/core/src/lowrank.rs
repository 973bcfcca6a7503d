//! Factored two-dimensional functions `f = U1 C U2ᵀ` and the term algebra
//! used to assemble right-hand sides before recompression.

use std::sync::Arc;

use crate::dense::{self, DenseMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::stencil::StencilOperator;

/// Action applied to every frame column along one dimension.
#[derive(Clone, Debug)]
pub enum DimAction {
    Identity,
    /// Pointwise multiplication.
    Multiply(Arc<[f64]>),
    Derivative(Arc<StencilOperator>),
    /// `D(c * u)`: conservative (flux) form.
    FluxDerivative {
        coeff: Arc<[f64]>,
        op: Arc<StencilOperator>,
    },
    /// `c * D(u)`: advective form.
    AdvectiveDerivative {
        coeff: Arc<[f64]>,
        op: Arc<StencilOperator>,
    },
}

impl DimAction {
    pub fn multiply(c: Vec<f64>) -> Self {
        DimAction::Multiply(c.into())
    }

    pub fn derivative(op: StencilOperator) -> Self {
        DimAction::Derivative(Arc::new(op))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DimAction::Identity)
    }

    /// Length the action expects, if it constrains it.
    fn len(&self) -> Option<usize> {
        match self {
            DimAction::Identity => None,
            DimAction::Multiply(c) => Some(c.len()),
            DimAction::Derivative(op) => Some(op.n()),
            DimAction::FluxDerivative { coeff, .. } | DimAction::AdvectiveDerivative { coeff, .. } => Some(coeff.len()),
        }
    }

    /// Apply to one vector.
    pub fn apply_vec(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            DimAction::Identity => out.copy_from_slice(u),
            DimAction::Multiply(c) => {
                check_len(c.len(), u.len())?;
                for ((o, &x), &ci) in out.iter_mut().zip(u).zip(c.iter()) {
                    *o = ci * x;
                }
            }
            DimAction::Derivative(op) => op.apply_into(u, out)?,
            DimAction::FluxDerivative { coeff, op } => {
                check_len(coeff.len(), u.len())?;
                let w: Vec<f64> = u.iter().zip(coeff.iter()).map(|(x, c)| x * c).collect();
                op.apply_into(&w, out)?;
            }
            DimAction::AdvectiveDerivative { coeff, op } => {
                check_len(coeff.len(), u.len())?;
                op.apply_into(u, out)?;
                out.iter_mut().zip(coeff.iter()).for_each(|(o, c)| *o *= c);
            }
        }
        Ok(())
    }

    /// Apply to every column of `m`.
    pub fn apply_cols(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if self.is_identity() {
            return Ok(m.clone());
        }
        if let Some(n) = self.len() {
            check_len(n, m.rows())?;
        }
        let rows = m.rows();
        let mut out = DenseMatrix::zeros(rows, m.cols());
        let failed = std::sync::atomic::AtomicBool::new(false);
        par::for_each_chunk(out.data_mut(), rows.max(1), 20 * rows, |j, c| {
            if self.apply_vec(m.col(j), c).is_err() {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
            }
        });
        if failed.into_inner() {
            return Err(Error::InvalidInput("dimension action failed on a column".into()));
        }
        Ok(out)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Shape {
            context: "DimAction",
            expected: format!("length {expected}"),
            found: format!("length {found}"),
        });
    }
    Ok(())
}

/// One separable term `scale * (a1 ⊗ a2) f`.
#[derive(Clone, Debug)]
pub struct TermSpec2D {
    pub a1: DimAction,
    pub a2: DimAction,
    pub scale: f64,
}

impl TermSpec2D {
    pub fn new(a1: DimAction, a2: DimAction, scale: f64) -> Self {
        Self { a1, a2, scale }
    }
}

/// `f = U1 C U2ᵀ` on an `n1 x n2` grid. After truncation the frames are
/// orthonormal and the core is diagonal with nonnegative, descending entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRank2D {
    u1: DenseMatrix,
    core: DenseMatrix,
    u2: DenseMatrix,
}

impl LowRank2D {
    pub fn new(u1: DenseMatrix, core: DenseMatrix, u2: DenseMatrix) -> Result<Self> {
        if core.rows() != u1.cols() || core.cols() != u2.cols() {
            return Err(Error::Shape {
                context: "LowRank2D::new",
                expected: format!("core {}x{}", u1.cols(), u2.cols()),
                found: format!("core {}x{}", core.rows(), core.cols()),
            });
        }
        Ok(Self { u1, core, u2 })
    }

    /// Rank-one `s * a ⊗ b`.
    pub fn rank1(a: &[f64], b: &[f64], s: f64) -> Self {
        Self {
            u1: DenseMatrix::column_vector(a),
            core: DenseMatrix::from_col_major(1, 1, vec![s]).expect("1x1"),
            u2: DenseMatrix::column_vector(b),
        }
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        let mut a = vec![0.0; n1];
        let mut b = vec![0.0; n2];
        if n1 > 0 {
            a[0] = 1.0;
        }
        if n2 > 0 {
            b[0] = 1.0;
        }
        Self::rank1(&a, &b, 0.0)
    }

    /// Sample a separable sum `sum_k a_k(x) b_k(y)` given as column pairs.
    pub fn from_columns(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidInput("need matching, nonempty column lists".into()));
        }
        Self::new(
            DenseMatrix::from_columns(a),
            DenseMatrix::identity(a.len()),
            DenseMatrix::from_columns(b),
        )
    }

    /// Compress a full grid function.
    pub fn from_dense(m: &DenseMatrix, eps: f64, r_max: usize) -> Result<Self> {
        let d = dense::svd(m)?;
        let r = dense::truncation_rank(&d.s, eps, r_max);
        Self::new(d.u.columns(0, r), DenseMatrix::diag(&d.s[..r]), d.v.columns(0, r))
    }

    pub fn n1(&self) -> usize {
        self.u1.rows()
    }

    pub fn n2(&self) -> usize {
        self.u2.rows()
    }

    /// Number of frame columns in each dimension.
    pub fn ranks(&self) -> (usize, usize) {
        (self.u1.cols(), self.u2.cols())
    }

    /// Rank of a truncated representation (the larger frame count).
    pub fn rank(&self) -> usize {
        self.u1.cols().max(self.u2.cols())
    }

    pub fn u1(&self) -> &DenseMatrix {
        &self.u1
    }

    pub fn u2(&self) -> &DenseMatrix {
        &self.u2
    }

    pub fn core(&self) -> &DenseMatrix {
        &self.core
    }

    /// Diagonal of the core; the singular values after truncation.
    pub fn singular_values(&self) -> Vec<f64> {
        (0..self.core.rows().min(self.core.cols()))
            .map(|i| self.core[(i, i)])
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.core.scale(s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.scale(s);
        c
    }

    /// Full `n1 x n2` grid values.
    pub fn to_dense(&self) -> DenseMatrix {
        self.u1.matmul(&self.core).matmul_t(&self.u2)
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite() && self.core.is_finite()
    }

    /// Frobenius inner product of the grid values.
    pub fn inner(&self, other: &LowRank2D) -> f64 {
        let g1 = self.u1.t_matmul(&other.u1);
        let g2 = other.u2.t_matmul(&self.u2);
        // tr(Caᵀ G1 Cb G2)
        let t = self.core.t_matmul(&g1.matmul(&other.core).matmul(&g2));
        (0..t.rows()).map(|i| t[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// `w1ᵀ f w2`.
    pub fn weighted_sum(&self, w1: &[f64], w2: &[f64]) -> f64 {
        let a: Vec<f64> = (0..self.u1.cols()).map(|j| dense::dot(self.u1.col(j), w1)).collect();
        let b: Vec<f64> = (0..self.u2.cols()).map(|j| dense::dot(self.u2.col(j), w2)).collect();
        let mut s = 0.0;
        for j in 0..self.core.cols() {
            for i in 0..self.core.rows() {
                s += a[i] * self.core[(i, j)] * b[j];
            }
        }
        s
    }

    /// Sum over dimension 2 with weights `w2`: the vector `U1 C (U2ᵀ w2)`.
    pub fn contract_dim2(&self, w2: &[f64]) -> Vec<f64> {
        let b: Vec<f64> = (0..self.u2.cols()).map(|j| dense::dot(self.u2.col(j), w2)).collect();
        let cb = self.core.matmul(&DenseMatrix::column_vector(&b));
        self.u1.matmul(&cb).into_data()
    }

    pub fn max_abs(&self) -> f64 {
        self.to_dense().max_abs()
    }

    /// Same core, actions applied to the frames.
    pub fn apply(&self, a1: &DimAction, a2: &DimAction) -> Result<Self> {
        Ok(Self {
            u1: a1.apply_cols(&self.u1)?,
            core: self.core.clone(),
            u2: a2.apply_cols(&self.u2)?,
        })
    }

    /// Replace the dimension-1 frames.
    pub fn with_u1(&self, u1: DenseMatrix) -> Result<Self> {
        Self::new(u1, self.core.clone(), self.u2.clone())
    }

    /// Recompress so that the discarded part has Frobenius norm at most
    /// `eps` times the norm of `self`, keeping at most `r_max` terms.
    pub fn truncate(&self, eps: f64, r_max: usize) -> Result<Self> {
        self.truncate_with(|s| dense::truncation_rank(s, eps, r_max))
    }

    /// Recompress with an absolute Frobenius tolerance.
    pub fn truncate_abs(&self, tol: f64, r_max: usize) -> Result<Self> {
        self.truncate_with(|s| dense::truncation_rank_abs(s, tol, r_max))
    }

    fn truncate_with(&self, rank: impl Fn(&[f64]) -> usize) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::NonFinite("LowRank2D::truncate"));
        }
        let q1 = dense::qr(&self.u1)?;
        let q2 = dense::qr(&self.u2)?;
        let m = q1.r.matmul(&self.core).matmul_t(&q2.r);
        let d = dense::svd(&m)?;
        let r = rank(&d.s);
        let (u, v, s) = if d.s.is_empty() {
            (
                DenseMatrix::zeros(m.rows(), 1),
                DenseMatrix::zeros(m.cols(), 1),
                vec![0.0],
            )
        } else {
            (d.u.columns(0, r), d.v.columns(0, r), d.s[..r].to_vec())
        };
        Ok(Self {
            u1: q1.q.matmul(&u),
            core: DenseMatrix::diag(&s),
            u2: q2.q.matmul(&v),
        })
    }
}

/// Accumulates a sum of factored matrices before a single recompression.
#[derive(Clone, Debug, Default)]
pub struct SumBuilder2D {
    u1: Vec<DenseMatrix>,
    core: Vec<DenseMatrix>,
    u2: Vec<DenseMatrix>,
}

impl SumBuilder2D {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.core.is_empty()
    }

    /// Add `s * g`.
    pub fn push(&mut self, s: f64, g: &LowRank2D) {
        self.u1.push(g.u1.clone());
        self.core.push(g.core.scaled(s));
        self.u2.push(g.u2.clone());
    }

    /// Add `factor * sum_k scale_k (a1_k ⊗ a2_k) f`.
    pub fn push_terms(&mut self, f: &LowRank2D, terms: &[TermSpec2D], factor: f64) -> Result<()> {
        let applied = par::map_range(terms.len(), 40 * (f.n1() + f.n2()) * f.rank(), |k| {
            let t = &terms[k];
            f.apply(&t.a1, &t.a2)
        });
        for (t, g) in terms.iter().zip(applied) {
            self.push(factor * t.scale, &g?);
        }
        Ok(())
    }

    /// Assemble the (uncompressed) block-diagonal representation.
    pub fn build(&self) -> Result<LowRank2D> {
        if self.is_empty() {
            return Err(Error::InvalidInput("empty sum".into()));
        }
        let u1: Vec<&DenseMatrix> = self.u1.iter().collect();
        let u2: Vec<&DenseMatrix> = self.u2.iter().collect();
        let c: Vec<&DenseMatrix> = self.core.iter().collect();
        LowRank2D::new(
            DenseMatrix::hcat(&u1),
            DenseMatrix::block_diag(&c),
            DenseMatrix::hcat(&u2),
        )
    }

    pub fn truncate(&self, eps: f64, r_max: usize) -> Result<LowRank2D> {
        self.build()?.truncate(eps, r_max)
    }
}

/// Concatenate `scale_k (a1_k ⊗ a2_k) f` for every term together with the
/// extra summands, without compressing.
pub fn add_terms(f: &LowRank2D, terms: &[TermSpec2D], extra: &[(f64, &LowRank2D)]) -> Result<LowRank2D> {
    let mut b = SumBuilder2D::new();
    b.push_terms(f, terms, 1.0)?;
    for (s, g) in extra {
        b.push(*s, g);
    }
    b.build()
}
