//! Properties checked against dense reconstructions. Each returns a
//! `TestCaseResult` so it can run under `proptest!` or a manual runner.

use lrvlasov::dense::{self, DenseMatrix};
use lrvlasov::fields::{poisson_2d_dense, poisson_2d_lrcg, CgOptions};
use lrvlasov::ht::{truncate_sum, HtTensor};
use lrvlasov::lowrank::{add_terms, DimAction, LowRank2D, TermSpec2D};
use lrvlasov::stencil::{Bias, Boundary, Reconstruction, StencilOperator};
use proptest::prelude::*;
use proptest::test_runner::TestCaseResult;

use super::*;

/// Entrywise agreement required between factored and dense results.
pub const EQ_TOL: f64 = 1e-11;

macro_rules! close {
    ($name:expr, $got:expr, $want:expr) => {{
        let d = rel_diff(&$got, &$want);
        prop_assert!(d <= EQ_TOL, "{}: relative difference {:e}", $name, d);
    }};
}

fn scalar(x: f64) -> Vec<f64> {
    vec![x]
}

/// Inputs for the low-rank matrix properties.
#[derive(Clone, Debug)]
pub struct LowRankCase {
    pub f: LowRank2D,
    pub g: LowRank2D,
    pub a1: DimAction,
    pub a2: DimAction,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub s: f64,
}

pub fn lowrank_case() -> impl Strategy<Value = LowRankCase> {
    (
        lowrank(N, N, 4),
        lowrank(N, N, 4),
        action(N),
        action(N),
        values(N),
        values(N),
        -2.0..2.0f64,
    )
        .prop_map(|(f, g, a1, a2, w1, w2, s)| LowRankCase {
            f,
            g,
            a1,
            a2,
            w1,
            w2,
            s,
        })
}

pub fn lowrank_ops(c: &LowRankCase) -> TestCaseResult {
    let dims = [N, N];
    let fd = row_major(&c.f.to_dense());
    let gd = row_major(&c.g.to_dense());

    let applied = apply_axis(&apply_axis(&fd, &dims, 0, &c.a1), &dims, 1, &c.a2);
    close!(
        "apply",
        row_major(&c.f.apply(&c.a1, &c.a2).unwrap().to_dense()),
        applied
    );

    close!(
        "scaled",
        row_major(&c.f.scaled(c.s).to_dense()),
        fd.iter().map(|x| c.s * x).collect::<Vec<_>>()
    );

    let terms = [TermSpec2D::new(c.a1.clone(), c.a2.clone(), c.s)];
    let sum = add_terms(&c.f, &terms, &[(-0.5, &c.g)]).unwrap();
    let want: Vec<f64> = applied.iter().zip(&gd).map(|(a, g)| c.s * a - 0.5 * g).collect();
    close!("add_terms", row_major(&sum.to_dense()), want);

    let dot: f64 = fd.iter().zip(&gd).map(|(a, b)| a * b).sum();
    close!("inner", scalar(c.f.inner(&c.g)), scalar(dot));
    close!("frobenius_norm", scalar(c.f.frobenius_norm()), scalar(norm(&fd)));
    close!("max_abs", scalar(c.f.max_abs()), scalar(max_abs(&fd)));

    let (col, _) = contract_axis(&fd, &dims, 1, &c.w2);
    close!("contract_dim2", c.f.contract_dim2(&c.w2), col);
    let (ws, _) = contract_axis(&col, &[N], 0, &c.w1);
    close!("weighted_sum", scalar(c.f.weighted_sum(&c.w1, &c.w2)), ws);

    let exact = LowRank2D::from_dense(&c.f.to_dense(), 0.0, usize::MAX).unwrap();
    close!("from_dense", row_major(&exact.to_dense()), fd);

    let mut s = c.f.truncate(0.0, usize::MAX).unwrap().singular_values();
    let mut reference = dense::svd(&c.f.to_dense()).unwrap().s;
    s.resize(N, 0.0);
    reference.resize(N, 0.0);
    close!("singular_values", s, reference);
    Ok(())
}

/// The discarded part of a truncation is at most `eps` times the norm.
pub fn lowrank_truncation(f: &LowRank2D, eps: f64) -> TestCaseResult {
    let fd = row_major(&f.to_dense());
    let t = f.truncate(eps, usize::MAX).unwrap();
    let err = diff_norm(&row_major(&t.to_dense()), &fd);
    let bound = eps * norm(&fd);
    prop_assert!(err <= bound * (1.0 + 1e-9) + 1e-13, "error {err:e} above {bound:e}");
    let sv = t.singular_values();
    prop_assert!(
        sv.windows(2).all(|w| w[0] >= w[1]),
        "singular values not sorted: {sv:?}"
    );
    Ok(())
}

/// Inputs for the hierarchical Tucker properties.
#[derive(Clone, Debug)]
pub struct HtCase {
    pub t: HtTensor,
    pub u: HtTensor,
    pub e: LowRank2D,
    pub h: LowRank2D,
    pub action: DimAction,
    pub mu: usize,
    pub w: [Vec<f64>; 4],
    pub s: f64,
}

pub fn ht_case() -> impl Strategy<Value = HtCase> {
    (
        ht(N, 3),
        ht(N, 3),
        lowrank(N, N, 3),
        lowrank(N, N, 3),
        action(N),
        0..4usize,
        prop::array::uniform4(values(N)),
        -2.0..2.0f64,
    )
        .prop_map(|(t, u, e, h, action, mu, w, s)| HtCase {
            t,
            u,
            e,
            h,
            action,
            mu,
            w,
            s,
        })
}

pub fn ht_ops(c: &HtCase) -> TestCaseResult {
    let dims = [N; 4];
    let td = c.t.to_dense();
    let ud = c.u.to_dense();

    let sum: Vec<f64> = td.iter().zip(&ud).map(|(a, b)| a + b).collect();
    close!("add", c.t.add(&c.u).unwrap().to_dense(), sum);
    close!(
        "scaled",
        c.t.scaled(c.s).to_dense(),
        td.iter().map(|x| c.s * x).collect::<Vec<_>>()
    );
    close!(
        "apply_leaf",
        c.t.apply_leaf(c.mu, &c.action).unwrap().to_dense(),
        apply_axis(&td, &dims, c.mu, &c.action)
    );

    let ed = c.e.to_dense();
    let had: Vec<f64> = td
        .iter()
        .enumerate()
        .map(|(k, x)| x * ed[(k / (N * N * N), (k / (N * N)) % N)])
        .collect();
    close!("hadamard_x12", c.t.hadamard_x12(&c.e).unwrap().to_dense(), had);

    let flipped: Vec<f64> = (0..td.len())
        .map(|k| {
            let (x34, x12) = (k % (N * N), k / (N * N));
            let (x3, x4) = (x34 / N, x34 % N);
            td[x12 * N * N + (N - 1 - x3) * N + (N - 1 - x4)]
        })
        .collect();
    close!("flip_34", c.t.flip_34().to_dense(), flipped);

    let (c4, d4) = contract_axis(&td, &dims, 3, &c.w[3]);
    let (c34, d34) = contract_axis(&c4, &d4, 2, &c.w[2]);
    close!(
        "contract_34",
        row_major(&c.t.contract_34(&c.w[2], &c.w[3]).unwrap().to_dense()),
        c34
    );
    let (c2, d2) = contract_axis(&c34, &d34, 1, &c.w[1]);
    let (all, _) = contract_axis(&c2, &d2, 0, &c.w[0]);
    let w = [&c.w[0][..], &c.w[1], &c.w[2], &c.w[3]];
    close!("weighted_sum", scalar(c.t.weighted_sum(w).unwrap()), all);

    let dot: f64 = td.iter().zip(&ud).map(|(a, b)| a * b).sum();
    close!("inner", scalar(c.t.inner(&c.u)), scalar(dot));
    close!("norm", scalar(c.t.norm()), scalar(norm(&td)));

    for a in 0..4 {
        for b in a + 1..4 {
            let others: Vec<usize> = (0..4).filter(|&m| m != a && m != b).collect();
            let (x, dx) = contract_axis(&td, &dims, others[1], &c.w[others[1]]);
            let (x, _) = contract_axis(&x, &dx, others[0], &c.w[others[0]]);
            let sec = c.t.section((a, b), [&c.w[others[0]], &c.w[others[1]]]).unwrap();
            close!("section", row_major(&sec), x);
        }
    }

    let (e, h) = (row_major(&ed), row_major(&c.h.to_dense()));
    let outer: Vec<f64> = (0..td.len()).map(|k| e[k / (N * N)] * h[k % (N * N)]).collect();
    close!("from_product", HtTensor::from_product(&c.e, &c.h).to_dense(), outer);

    let sep = HtTensor::from_separable([&c.w[0], &c.w[1], &c.w[2], &c.w[3]], c.s);
    let sep_d: Vec<f64> = (0..td.len())
        .map(|k| c.s * c.w[0][k / (N * N * N)] * c.w[1][(k / (N * N)) % N] * c.w[2][(k / N) % N] * c.w[3][k % N])
        .collect();
    close!("from_separable", sep.to_dense(), sep_d);

    let exact = truncate_sum(&[(1.0, &c.t), (c.s, &c.u)], 0.0, usize::MAX).unwrap();
    let want: Vec<f64> = td.iter().zip(&ud).map(|(a, b)| a + c.s * b).collect();
    close!("truncate_sum", exact.to_dense(), want);

    let back = HtTensor::from_bytes(&c.t.to_bytes()).unwrap();
    prop_assert_eq!(&back, &c.t);
    Ok(())
}

/// `truncate_sum` keeps the error below `eps` times the norm of the sum.
pub fn ht_truncation(t: &HtTensor, u: &HtTensor, s: f64, eps: f64) -> TestCaseResult {
    let want: Vec<f64> = t.to_dense().iter().zip(u.to_dense()).map(|(a, b)| a + s * b).collect();
    let r = truncate_sum(&[(1.0, t), (s, u)], eps, usize::MAX).unwrap();
    let err = diff_norm(&r.to_dense(), &want);
    let bound = eps * norm(&want);
    prop_assert!(err <= bound * (1.0 + 1e-9) + 1e-13, "error {err:e} above {bound:e}");
    Ok(())
}

/// Periodic flux differences telescope: `sum_i D(c u)_i = 0`.
pub fn flux_conservation(u: &[f64], c: &[f64], recon: Reconstruction, bias: Bias) -> TestCaseResult {
    let n = u.len();
    let op = StencilOperator::new(&grid(n), bias, recon, Boundary::Periodic);
    let flux: Vec<f64> = u.iter().zip(c).map(|(a, b)| a * b).collect();
    let d = op.apply(&flux).unwrap();
    let total: f64 = d.iter().sum::<f64>() * op.h();
    let scale = max_abs(&flux).max(1e-300);
    prop_assert!(
        total.abs() <= 64.0 * f64::EPSILON * n as f64 * scale,
        "net flux {total:e}"
    );
    Ok(())
}

/// Low-rank CG against the dense FFT solve on a 32 x 32 grid.
pub fn cg_matches_fft(rho: &LowRank2D) -> TestCaseResult {
    let length = (2.0, 3.0);
    let opts = CgOptions::for_eps(1e-10);
    let cg = poisson_2d_lrcg(rho, length, &opts).unwrap();
    let (phi, e1, e2) = poisson_2d_dense(&rho.to_dense(), length).unwrap();
    for (name, got, want) in [("phi", &cg.phi, &phi), ("E1", &cg.e1, &e1), ("E2", &cg.e2, &e2)] {
        let got = row_major(&got.to_dense());
        let want = row_major(want);
        let rel = diff_norm(&got, &want) / norm(&want).max(1e-300);
        prop_assert!(rel <= 1e-6, "{name}: relative error {rel:e}");
    }
    Ok(())
}

pub fn cg_density() -> impl Strategy<Value = LowRank2D> {
    lowrank(32, 32, 4)
}

/// Helper for rank-deficient inputs: `a` with columns repeated.
pub fn repeat_columns(a: &DenseMatrix, times: usize) -> DenseMatrix {
    let blocks: Vec<&DenseMatrix> = std::iter::repeat_n(a, times).collect();
    DenseMatrix::hcat(&blocks)
}
