//! Acceptance runs. Prints one PASS/FAIL line per criterion with the measured
//! values next to the targets.
//!
//! Positional arguments select criteria by substring. A failed criterion is
//! reported but does not fail the process unless `ACCEPTANCE_STRICT=1`.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use lrvlasov::integrator::Multistep;
use lrvlasov::reference::DenseVlasov4D;
use lrvlasov::scenarios::models::initial_4d;
use lrvlasov::scenarios::run::{run, NullObserver, RunOutput};
use lrvlasov::scenarios::{InitialShape, Method, ScenarioConfig, ScenarioId};
use lrvlasov::stencil::Reconstruction;
use lrvlasov::Result;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestCaseResult, TestRunner};

type Criterion = fn() -> Result<Verdict>;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        ok,
        detail: detail.into(),
    })
}

/// `x` lies within a factor `f` of `target` on either side.
fn within(x: f64, target: f64, f: f64) -> bool {
    x.is_finite() && x <= target * f && x >= target / f
}

fn eoc(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn run_cfg(cfg: &ScenarioConfig) -> Result<RunOutput> {
    run(cfg, &mut NullObserver)
}

fn error_of(o: &RunOutput) -> f64 {
    o.error.unwrap_or(f64::NAN)
}

fn advection4d(n: usize) -> Result<(RunOutput, f64)> {
    let mut cfg = ScenarioConfig::new(ScenarioId::Advection4d).with_n(&[n])?;
    cfg.eps = 1e-6;
    cfg.recon = Reconstruction::Linear5;
    cfg.t_end = 2.0 * PI;
    // Fastest of three runs, to keep scheduler noise out of the scaling fit.
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..3 {
        let start = Instant::now();
        let o = run_cfg(&cfg)?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(o);
    }
    Ok((out.expect("three runs"), best))
}

/// Shared by the three criteria that use the 4D advection runs.
struct Advection4dRuns {
    errors: Vec<f64>,
    ranks: Vec<usize>,
    seconds: Vec<f64>,
}

fn advection4d_runs() -> Result<Advection4dRuns> {
    let mut r = Advection4dRuns {
        errors: vec![],
        ranks: vec![],
        seconds: vec![],
    };
    for n in [16, 32, 64] {
        let (o, s) = advection4d(n)?;
        r.errors.push(error_of(&o));
        r.ranks.push(o.max_rank);
        r.seconds.push(s);
    }
    Ok(r)
}

fn advection4d_convergence(r: &Advection4dRuns) -> Result<Verdict> {
    let target = [2.56e-2, 5.76e-3, 1.41e-3];
    let rates = [eoc(r.errors[0], r.errors[1]), eoc(r.errors[1], r.errors[2])];
    let ok =
        r.errors.iter().zip(target).all(|(&e, t)| within(e, t, 2.0)) && rates.iter().all(|p| (1.8..=2.4).contains(p));
    let total: f64 = r.seconds.iter().sum();
    verdict(
        ok,
        format!(
            "errors [{}] vs [{}] (2x), EOC [{:.2}, {:.2}] in [1.8, 2.4], {total:.2}s total",
            sci(&r.errors),
            sci(&target),
            rates[0],
            rates[1]
        ),
    )
}

fn advection4d_rank(r: &Advection4dRuns) -> Result<Verdict> {
    verdict(
        r.ranks[2] <= 3,
        format!("max hierarchical rank at N=64 is {} (<= 3)", r.ranks[2]),
    )
}

fn cpu_scaling(r: &Advection4dRuns) -> Result<Verdict> {
    let x = [16.0, 32.0, 64.0];
    let y = &r.seconds;
    let mx = x.iter().sum::<f64>() / 3.0;
    let my = y.iter().sum::<f64>() / 3.0;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let slope = sxy / sxx;
    verdict(
        r2 >= 0.9,
        format!(
            "wall-clock [{}] s, linear fit slope {slope:.3e} s per point, R^2 {r2:.4} (>= 0.9)",
            sci(y)
        ),
    )
}

fn rotation_solution() -> Result<Verdict> {
    let o32 = run_cfg(&ScenarioConfig::new(ScenarioId::Rotation).with_n(&[32])?)?;
    let o64 = run_cfg(&ScenarioConfig::new(ScenarioId::Rotation).with_n(&[64])?)?;
    let e = error_of(&o32);
    let ok = within(e, 6.16e-3, 2.0) && (14..=24).contains(&o64.max_rank);
    verdict(
        ok,
        format!(
            "N=32 error {e:.3e} vs 6.16e-3 (2x), N=64 max rank {} in [14, 24]",
            o64.max_rank
        ),
    )
}

fn rotation_flowmap() -> Result<Verdict> {
    let target = [1.47e-3, 3.66e-4, 9.15e-5, 2.29e-5];
    let mut errs = vec![];
    let mut ranks = vec![];
    for n in [16, 32, 64, 128] {
        let mut cfg = ScenarioConfig::new(ScenarioId::Rotation).with_n(&[n])?;
        cfg.method = Method::Flowmap;
        cfg.eps = 1e-5;
        let o = run_cfg(&cfg)?;
        errs.push(o.map_errors.map(|m| m.0).unwrap_or(f64::NAN));
        ranks.push(o.max_rank);
    }
    let rates: Vec<f64> = errs.windows(2).map(|w| eoc(w[0], w[1])).collect();
    let ok = errs.iter().zip(target).all(|(&e, t)| within(e, t, 1.5))
        && rates.iter().all(|p| (p - 2.0).abs() <= 0.2)
        && ranks.iter().all(|&r| r == 2);
    verdict(
        ok,
        format!(
            "X* errors [{}] vs [{}] (1.5x), EOC [{}] (2.0 +- 0.2), ranks {ranks:?} (= 2)",
            sci(&errs),
            sci(&target),
            rates.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn swirl() -> Result<Verdict> {
    let smooth = run_cfg(&ScenarioConfig::new(ScenarioId::Swirl).with_n(&[32])?)?;
    let e = error_of(&smooth);

    let mut cross = ScenarioConfig::new(ScenarioId::Swirl).with_n(&[128])?;
    cross.shape = InitialShape::Cross;
    let mut maps = cross.clone();
    maps.method = Method::Flowmap;
    let map_rank = run_cfg(&maps)?.max_rank;
    cross.recon = Reconstruction::Weno5;
    let sol = run_cfg(&cross)?;
    let sol_rank = sol.records.last().map(|r| r.max_rank()).unwrap_or(0);

    let ok = within(e, 3.00e-3, 2.0) && map_rank <= 8 && sol_rank > 40;
    verdict(
        ok,
        format!(
            "smooth N=32 error {e:.3e} vs 3.00e-3 (2x); cross N=128: max map rank {map_rank} (<= 8), \
             solution rank at T {sol_rank} (> 40)"
        ),
    )
}

fn linear_vp() -> Result<Verdict> {
    let mut cfg = ScenarioConfig::new(ScenarioId::LinearVp).with_n(&[64])?;
    cfg.eps = 1e-7;
    cfg.t_end = 0.75;
    let sol = run_cfg(&cfg)?;
    cfg.method = Method::Flowmap;
    let maps = run_cfg(&cfg)?;
    let e1 = error_of(&sol);
    let ex = maps.map_errors.map(|m| m.0).unwrap_or(f64::NAN);
    let ok = within(e1, 8.17e-4, 2.0) && within(ex, 3.98e-6, 2.0) && maps.max_rank <= 12;
    verdict(
        ok,
        format!(
            "solution N=64 max error {e1:.3e} vs 8.17e-4 (2x); X* error {ex:.3e} vs 3.98e-6 (2x), map rank {} (<= 12)",
            maps.max_rank
        ),
    )
}

fn strong_landau() -> Result<Verdict> {
    let target = [5.19e-2, 3.62e-3];
    let mut errs = vec![];
    let mut ranks = vec![];
    let start = Instant::now();
    for (nx, nv) in [(16, 32), (32, 64)] {
        let mut cfg = ScenarioConfig::new(ScenarioId::LandauStrong2d2v).with_n(&[nx, nv])?;
        cfg.eps = 1e-6;
        cfg.r_max = 64;
        cfg.reverse_at = Some(1.0);
        cfg.t_end = 2.0;
        let o = run_cfg(&cfg)?;
        errs.push(error_of(&o));
        ranks.push(o.max_rank);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = errs.iter().zip(target).all(|(&e, t)| within(e, t, 2.0));
    verdict(
        ok,
        format!(
            "errors vs initial state [{}] vs [{}] (2x), max ranks {ranks:?}, {secs:.0}s total (target < 600s)",
            sci(&errs),
            sci(&target)
        ),
    )
}

/// Least-squares slope of `ln W` through the local maxima of `W(t)`.
fn decay_rate(t: &[f64], w: &[f64]) -> f64 {
    let peaks: Vec<(f64, f64)> = (1..w.len().saturating_sub(1))
        .filter(|&i| w[i] > w[i - 1] && w[i] >= w[i + 1])
        .map(|i| (t[i], w[i].ln()))
        .collect();
    let n = peaks.len() as f64;
    let mx = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let my = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn weak_landau() -> Result<Verdict> {
    let mut cfg = ScenarioConfig::new(ScenarioId::LandauWeak2d2v).with_n(&[16, 32])?;
    cfg.t_end = 15.0;
    let o = run_cfg(&cfg)?;
    let t: Vec<f64> = o.records.iter().map(|r| r.t).collect();
    let w: Vec<f64> = o.records.iter().map(|r| r.elec_energy).collect();
    let slope = decay_rate(&t, &w);
    let drift = o
        .records
        .iter()
        .map(|r| r.mass_rel_err.abs().max(r.energy_rel_err.abs()))
        .fold(0.0, f64::max);

    let grids = cfg.grids()?;
    let f0 = initial_4d(&cfg, &grids)?.to_dense();
    let mut ev = DenseVlasov4D::new(grids, cfg.recon)?;
    let mut ms = Multistep::new(cfg.integrator, o.dt, 0.0, f0);
    let mut td = vec![0.0];
    let mut wd = vec![ev.electric_energy(ms.current())?];
    for _ in 0..o.steps {
        ms.step(&mut ev)?;
        td.push(ms.time());
        wd.push(ev.electric_energy(ms.current())?);
    }
    let dense_slope = decay_rate(&td, &wd);
    let rel = ((slope - dense_slope) / dense_slope).abs();
    let ok = rel <= 0.05 && drift <= 100.0 * cfg.eps;
    verdict(
        ok,
        format!(
            "ln W slope {slope:.5} vs full grid {dense_slope:.5} (rel {rel:.1e} <= 5%), \
             max mass/energy drift {drift:.2e} (<= {:.0e}), max rank {}",
            100.0 * cfg.eps,
            o.max_rank
        ),
    )
}

/// Run a property for `cases` generated inputs; returns a failure message.
fn check<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> TestCaseResult,
) -> Option<String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).err().map(|e| format!("{name}: {e}"))
}

fn oracle_suites() -> Result<Verdict> {
    use common::*;
    use lrvlasov::stencil::Bias;
    use proptest::prelude::*;

    let recon = prop_oneof![Just(Reconstruction::Linear5), Just(Reconstruction::Weno5)];
    let bias = prop_oneof![Just(Bias::Left), Just(Bias::Right)];
    let eps = prop::sample::select(vec![0.3, 1e-2, 1e-5, 1e-10]);
    let failures: Vec<String> = [
        check("low-rank operations", 256, oracles::lowrank_case(), |c| {
            oracles::lowrank_ops(&c)
        }),
        check("HT operations", 128, oracles::ht_case(), |c| oracles::ht_ops(&c)),
        check("low-rank truncation", 256, (lowrank(N, N, 6), eps.clone()), |(f, e)| {
            oracles::lowrank_truncation(&f, e)
        }),
        check(
            "HT truncation",
            128,
            (ht(N, 4), ht(N, 4), -1.0..1.0f64, eps),
            |(t, u, s, e)| oracles::ht_truncation(&t, &u, s, e),
        ),
        check(
            "flux conservation",
            256,
            ((8..96usize).prop_flat_map(|n| (values(n), values(n))), recon, bias),
            |((u, c), r, b)| oracles::flux_conservation(&u, &c, r, b),
        ),
        check("CG vs FFT at 32x32", 16, oracles::cg_density(), |rho| {
            oracles::cg_matches_fft(&rho)
        }),
    ]
    .into_iter()
    .flatten()
    .collect();
    let ok = failures.is_empty();
    let detail = if ok {
        format!(
            "dense equivalence at N={N} (tol {:.0e}), truncation <= eps*norm, telescoping fluxes, CG vs FFT: all hold",
            oracles::EQ_TOL
        )
    } else {
        failures.join("; ")
    };
    verdict(ok, detail)
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut results: Vec<(&str, Result<Verdict>)> = Vec::new();
    let mut report = |name: &'static str, v: Result<Verdict>| {
        let line = match &v {
            Ok(v) => format!("{} {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail),
            Err(e) => format!("FAIL {name}: error: {e}"),
        };
        println!("{line}");
        results.push((name, v));
    };

    let adv_names = ["advection4d-convergence", "advection4d-rank", "cpu-scaling"];
    if adv_names.iter().any(|n| wanted(n)) {
        match advection4d_runs() {
            Ok(r) => {
                report(adv_names[0], advection4d_convergence(&r));
                report(adv_names[1], advection4d_rank(&r));
                report(adv_names[2], cpu_scaling(&r));
            }
            Err(e) => {
                let msg = e.to_string();
                for n in adv_names {
                    report(n, Err(lrvlasov::Error::InvalidInput(msg.clone())));
                }
            }
        }
    }
    let single: [(&'static str, Criterion); 7] = [
        ("rotation-solution", rotation_solution),
        ("rotation-flowmap", rotation_flowmap),
        ("swirl", swirl),
        ("linear-vp", linear_vp),
        ("strong-landau-reversibility", strong_landau),
        ("weak-landau", weak_landau),
        ("oracle-suites", oracle_suites),
    ];
    for (name, f) in single {
        if wanted(name) {
            report(name, f());
        }
    }

    let passed = results.iter().filter(|(_, v)| matches!(v, Ok(v) if v.ok)).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
