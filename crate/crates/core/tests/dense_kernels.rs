mod common;

use common::oracles::repeat_columns;
use common::*;
use lrvlasov::dense::{qr, svd, DenseMatrix};
use proptest::prelude::*;

fn orthonormality_defect(q: &DenseMatrix) -> f64 {
    let g = q.t_matmul(q);
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - want).abs());
        }
    }
    worst
}

fn reconstruct(u: &DenseMatrix, s: &[f64], v: &DenseMatrix) -> DenseMatrix {
    u.matmul(&DenseMatrix::diag(s)).matmul_t(v)
}

fn shape() -> impl Strategy<Value = DenseMatrix> {
    (1..80usize, 1..80usize).prop_flat_map(|(m, n)| matrix(m, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qr_factors(a in shape()) {
        let f = qr(&a).unwrap();
        prop_assert!(orthonormality_defect(&f.q) < 1e-12);
        for i in 0..f.r.rows() {
            prop_assert!(f.r[(i, i)] >= 0.0);
            for j in 0..i.min(f.r.cols()) {
                prop_assert_eq!(f.r[(i, j)], 0.0);
            }
        }
        prop_assert!(rel_diff(f.q.matmul(&f.r).data(), a.data()) < 1e-12);
    }

    #[test]
    fn svd_factors(a in shape()) {
        let d = svd(&a).unwrap();
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(d.s.iter().all(|&x| x >= 0.0));
        prop_assert!(orthonormality_defect(&d.u) < 1e-12);
        prop_assert!(orthonormality_defect(&d.v) < 1e-12);
        prop_assert!(rel_diff(reconstruct(&d.u, &d.s, &d.v).data(), a.data()) < 1e-12);
    }

    #[test]
    fn svd_of_rank_deficient_input(a in (8..40usize, 1..4usize).prop_flat_map(|(m, r)| matrix(m, r)), times in 2..6usize) {
        let b = repeat_columns(&a, times);
        let d = svd(&b).unwrap();
        let r = a.cols();
        prop_assert!(orthonormality_defect(&d.u) < 1e-12);
        prop_assert!(orthonormality_defect(&d.v) < 1e-12);
        let scale = d.s[0].max(1.0);
        prop_assert!(d.s[r..].iter().all(|&x| x <= 1e-12 * scale), "tail {:?}", &d.s[r..]);
        prop_assert!(rel_diff(reconstruct(&d.u, &d.s, &d.v).data(), b.data()) < 1e-12);
    }

    #[test]
    fn products_agree(a in matrix(13, 7), b in matrix(7, 9), c in matrix(13, 9)) {
        let ab = a.matmul(&b);
        let naive = DenseMatrix::from_fn(13, 9, |i, j| (0..7).map(|k| a[(i, k)] * b[(k, j)]).sum());
        prop_assert!(rel_diff(ab.data(), naive.data()) < 1e-14);
        prop_assert!(rel_diff(a.t_matmul(&c).data(), a.transpose().matmul(&c).data()) < 1e-14);
        prop_assert!(rel_diff(c.matmul_t(&b).data(), c.matmul(&b.transpose()).data()) < 1e-14);
    }
}

#[test]
fn single_row_transposed_product() {
    let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0]]);
    let b = DenseMatrix::from_rows(&[&[4.0, 5.0]]);
    let p = a.t_matmul(&b);
    assert_eq!(p.shape(), (3, 2));
    assert_eq!(p[(2, 1)], 15.0);
    let q = b.transpose().matmul_t(&a.transpose());
    assert_eq!(q.shape(), (2, 3));
    assert_eq!(q[(1, 2)], 15.0);
}

#[test]
fn zero_matrix_has_zero_spectrum() {
    let d = svd(&DenseMatrix::zeros(20, 6)).unwrap();
    assert!(d.s.iter().all(|&x| x == 0.0));
    assert!(orthonormality_defect(&d.u) < 1e-12);
    assert!(orthonormality_defect(&d.v) < 1e-12);
}

#[test]
fn large_svd_is_accurate() {
    let n = 200;
    let a = DenseMatrix::from_fn(n, n, |i, j| {
        1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 }
    });
    let d = svd(&a).unwrap();
    assert!(orthonormality_defect(&d.u) < 1e-12);
    assert!(rel_diff(reconstruct(&d.u, &d.s, &d.v).data(), a.data()) < 1e-12);
}

#[test]
fn non_finite_input_is_rejected() {
    let mut a = DenseMatrix::identity(4);
    a[(1, 2)] = f64::NAN;
    assert!(qr(&a).is_err());
    assert!(svd(&a).is_err());
}
