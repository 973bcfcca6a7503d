//! Hot kernels timed with the thread pool enabled and disabled.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lrvlasov::dense::{self, DenseMatrix};
use lrvlasov::ht::{truncate_sum, HtTensor};
use lrvlasov::integrator::Evolution;
use lrvlasov::lowrank::LowRank2D;
use lrvlasov::par;
use lrvlasov::scenarios::models::initial_4d;
use lrvlasov::scenarios::solve4d::HtTransport;
use lrvlasov::scenarios::{ScenarioConfig, ScenarioId};

fn smooth(rows: usize, cols: usize, seed: f64) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|k| ((k as f64 + seed) * 0.618_034).sin() + 0.1 * ((k % rows) as f64 * seed).cos())
        .collect();
    DenseMatrix::from_col_major(rows, cols, data).unwrap()
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn bench_svd(c: &mut Criterion) {
    let a = smooth(200, 200, 1.0);
    let mut g = c.benchmark_group("svd_200");
    for (name, seq) in modes() {
        par::set_sequential(seq);
        g.bench_function(name, |b| b.iter(|| dense::svd(black_box(&a)).unwrap()));
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_lowrank_truncate(c: &mut Criterion) {
    let f = LowRank2D::new(smooth(512, 60, 1.0), smooth(60, 60, 2.0), smooth(512, 60, 3.0)).unwrap();
    let mut g = c.benchmark_group("lowrank_truncate_512_r60");
    for (name, seq) in modes() {
        par::set_sequential(seq);
        g.bench_function(name, |b| b.iter(|| black_box(&f).truncate(1e-8, usize::MAX).unwrap()));
    }
    par::set_sequential(false);
    g.finish();
}

fn landau(n: usize) -> (HtTransport, HtTensor) {
    let cfg = ScenarioConfig::new(ScenarioId::LandauWeak2d2v)
        .with_n(&[n, 2 * n])
        .unwrap();
    let grids = cfg.grids().unwrap();
    (HtTransport::new(&cfg).unwrap(), initial_4d(&cfg, &grids).unwrap())
}

fn bench_ht(c: &mut Criterion) {
    let mut g = c.benchmark_group("ht");
    g.sample_size(20);
    for n in [16, 32] {
        let (mut ev, f) = landau(n);
        let terms = ev.rhs_terms(&f).unwrap();
        let mut all: Vec<(f64, &HtTensor)> = vec![(1.0, &f)];
        all.extend(terms.iter().map(|t| (-0.01, t)));
        for (name, seq) in modes() {
            par::set_sequential(seq);
            g.bench_with_input(BenchmarkId::new(format!("truncate_sum/{name}"), n), &all, |b, all| {
                b.iter(|| truncate_sum(all, 1e-6, 64).unwrap())
            });
            g.bench_with_input(BenchmarkId::new(format!("vlasov_step/{name}"), n), &f, |b, f| {
                b.iter(|| ev.combine(&[(1.0, f)], &[(0.01, f, 0.0)]).unwrap())
            });
        }
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, bench_svd, bench_lowrank_truncate, bench_ht);
criterion_main!(benches);
