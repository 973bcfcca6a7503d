//! Strategies and dense reference operations shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::sync::Arc;

use lrvlasov::dense::DenseMatrix;
use lrvlasov::ht::{HtTensor, Tensor3};
use lrvlasov::lowrank::{DimAction, LowRank2D};
use lrvlasov::stencil::{Bias, Boundary, Grid1D, Layout, Reconstruction, StencilOperator};
use proptest::prelude::*;

/// Grid size used by the dense-equivalence properties.
pub const N: usize = 8;

pub fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

pub fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    values(rows * cols).prop_map(move |v| DenseMatrix::from_col_major(rows, cols, v).unwrap())
}

pub fn lowrank(n1: usize, n2: usize, r_max: usize) -> impl Strategy<Value = LowRank2D> {
    (1..=r_max, 1..=r_max).prop_flat_map(move |(r1, r2)| {
        (matrix(n1, r1), matrix(r1, r2), matrix(n2, r2)).prop_map(|(u1, c, u2)| LowRank2D::new(u1, c, u2).unwrap())
    })
}

pub fn ht(n: usize, r_max: usize) -> impl Strategy<Value = HtTensor> {
    prop::array::uniform6(1..=r_max).prop_flat_map(move |[r1, r2, r3, r4, r12, r34]| {
        (
            (matrix(n, r1), matrix(n, r2), matrix(n, r3), matrix(n, r4)),
            values(r1 * r2 * r12),
            values(r3 * r4 * r34),
            matrix(r12, r34),
        )
            .prop_map(move |((l1, l2, l3, l4), b12, b34, root)| {
                let b12 = Tensor3::from_data([r1, r2, r12], b12).unwrap();
                let b34 = Tensor3::from_data([r3, r4, r34], b34).unwrap();
                HtTensor::new([l1, l2, l3, l4], b12, b34, root).unwrap()
            })
    })
}

pub fn grid(n: usize) -> Grid1D {
    Grid1D::new(n, 0.0, 1.0, Layout::Nodes).unwrap()
}

fn linear_op(n: usize, left: bool, periodic: bool) -> Arc<StencilOperator> {
    let bias = if left { Bias::Left } else { Bias::Right };
    let bnd = if periodic {
        Boundary::Periodic
    } else {
        Boundary::Extrapolate
    };
    Arc::new(StencilOperator::new(&grid(n), bias, Reconstruction::Linear5, bnd))
}

/// Every linear one-dimensional action on an `n`-point grid.
pub fn action(n: usize) -> impl Strategy<Value = DimAction> {
    prop_oneof![
        Just(DimAction::Identity),
        values(n).prop_map(DimAction::multiply),
        (any::<bool>(), any::<bool>()).prop_map(move |(l, p)| DimAction::Derivative(linear_op(n, l, p))),
        (values(n), any::<bool>(), any::<bool>()).prop_map(move |(c, l, p)| DimAction::FluxDerivative {
            coeff: c.into(),
            op: linear_op(n, l, p),
        }),
        (values(n), any::<bool>(), any::<bool>()).prop_map(move |(c, l, p)| DimAction::AdvectiveDerivative {
            coeff: c.into(),
            op: linear_op(n, l, p),
        }),
    ]
}

/// Row-major strides for `dims` (last index fastest).
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Apply `action` along `axis` of a row-major array.
pub fn apply_axis(v: &[f64], dims: &[usize], axis: usize, action: &DimAction) -> Vec<f64> {
    let st = strides(dims);
    let n = dims[axis];
    let mut out = v.to_vec();
    let mut line = vec![0.0; n];
    let mut res = vec![0.0; n];
    for base in 0..v.len() {
        if !(base / st[axis]).is_multiple_of(n) {
            continue;
        }
        for (i, x) in line.iter_mut().enumerate() {
            *x = v[base + i * st[axis]];
        }
        action.apply_vec(&line, &mut res).unwrap();
        for (i, x) in res.iter().enumerate() {
            out[base + i * st[axis]] = *x;
        }
    }
    out
}

/// Contract `axis` of a row-major array with `w`, dropping that axis.
pub fn contract_axis(v: &[f64], dims: &[usize], axis: usize, w: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let st = strides(dims);
    let mut rest = dims.to_vec();
    rest.remove(axis);
    let mut out = vec![0.0; rest.iter().product()];
    for (idx, x) in v.iter().enumerate() {
        let i = (idx / st[axis]) % dims[axis];
        let outer = idx / (st[axis] * dims[axis]);
        let inner = idx % st[axis];
        out[outer * st[axis] + inner] += w[i] * x;
    }
    (out, rest)
}

pub fn row_major(m: &DenseMatrix) -> Vec<f64> {
    lrvlasov::io::row_major(m)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest entrywise difference relative to the reference scale (at least one).
pub fn rel_diff(a: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(a.len(), reference.len());
    let d = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / max_abs(reference).max(1.0)
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
