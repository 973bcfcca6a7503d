//! Time loops, diagnostics and reference errors.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Method, ScenarioConfig, ScenarioId};
use super::models::{self, eval_at_feet, periodic_dims, reference_maps, Initial2D, Velocity2D};
use super::solve2d::{FlowMap2D, MapPair, Transport2D};
use super::solve4d::HtTransport;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ht::HtTensor;
use crate::integrator::{uniform_steps, Evolution, Multistep};
use crate::lowrank::LowRank2D;
use crate::stencil::{Grid1D, Layout};

/// One row of the diagnostics history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    /// `rank_1, rank_2, rank_3, rank_4, rank_12, rank_34`; 2D runs fill the
    /// first two only.
    pub ranks: [Option<usize>; 6],
    pub elec_energy: f64,
    pub mass: f64,
    pub mass_rel_err: f64,
    pub energy: f64,
    pub energy_rel_err: f64,
    pub l2_err: Option<f64>,
    pub step_seconds: f64,
}

impl DiagnosticsRecord {
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// How errors against a reference are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    /// Root mean square over grid points.
    Rms,
    /// Largest absolute pointwise difference.
    Max,
    /// Unweighted Frobenius norm of the grid differences.
    Frobenius,
}

impl ErrorNorm {
    pub fn for_scenario(id: ScenarioId) -> Self {
        match id {
            ScenarioId::LinearVp => ErrorNorm::Max,
            ScenarioId::TwoStream | ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v => ErrorNorm::Frobenius,
            _ => ErrorNorm::Rms,
        }
    }

    pub fn of_dense(self, a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let d = a.data().iter().zip(b.data()).map(|(x, y)| x - y);
        match self {
            ErrorNorm::Max => d.fold(0.0, |m, x| m.max(x.abs())),
            ErrorNorm::Frobenius => d.map(|x| x * x).sum::<f64>().sqrt(),
            ErrorNorm::Rms => (d.map(|x| x * x).sum::<f64>() / a.data().len().max(1) as f64).sqrt(),
        }
    }
}

/// Grid data handed to observers.
#[derive(Clone, Debug)]
pub enum SnapshotData {
    Grid2D(DenseMatrix),
    /// `(x1, v1)` cut, `(v1, v2)` cut and the full factorisation.
    Tensor4D {
        cut_xv: DenseMatrix,
        cut_vv: DenseMatrix,
        tensor: Box<HtTensor>,
    },
}

/// Receives diagnostics and snapshots as the run progresses.
pub trait Observer {
    fn record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    fn snapshot(&mut self, _step: usize, _t: f64, _data: &SnapshotData) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullObserver;

impl Observer for NullObserver {}

#[derive(Clone, Debug)]
pub enum FinalState {
    Matrix(LowRank2D),
    Maps(MapPair),
    Tensor(HtTensor),
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub state: FinalState,
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Error of the solution at the final time, when a reference exists.
    pub error: Option<f64>,
    /// Errors of the two feet at the final time (flow-map runs).
    pub map_errors: Option<(f64, f64)>,
    pub error_norm: ErrorNorm,
    pub max_rank: usize,
    /// Wall-clock seconds spent in time steps.
    pub step_seconds_total: f64,
}

/// Quantities measured on a state.
struct Measures {
    ranks: [Option<usize>; 6],
    mass: f64,
    energy: f64,
    elec_energy: f64,
}

trait Problem {
    type State: Clone;
    type Ev: Evolution<State = Self::State>;
    fn evolution(&mut self) -> &mut Self::Ev;
    fn measure(&mut self, s: &Self::State) -> Result<Measures>;
    fn snapshot(&self, s: &Self::State) -> Result<SnapshotData>;
    /// Error against an analytic or characteristic reference at time `t`.
    fn error(&self, s: &Self::State, t: f64) -> Result<Option<f64>>;
    /// Frobenius distance between two states' grid values.
    fn distance(&self, a: &Self::State, b: &Self::State) -> Result<f64>;
    /// `f(x, v) -> f(x, -v)`.
    fn reverse(&self, s: &Self::State) -> Result<Self::State>;
    /// Largest speed per dimension, for the step size.
    fn max_speeds(&mut self, s: &Self::State) -> Result<Vec<f64>>;
    fn wrap(s: Self::State) -> FinalState;
}

fn quadrature_weights(g: &Grid1D) -> Vec<f64> {
    vec![g.h(); g.n()]
}

/// Weights that evaluate at the centre of a dimension: the middle node, or
/// the average of the two middle cells.
pub fn centre_weights(g: &Grid1D) -> Vec<f64> {
    let n = g.n();
    let mut w = vec![0.0; n];
    match g.layout() {
        Layout::Nodes => w[n / 2] = 1.0,
        Layout::CellCentered if n.is_multiple_of(2) => {
            w[n / 2 - 1] = 0.5;
            w[n / 2] = 0.5;
        }
        Layout::CellCentered => w[n / 2] = 1.0,
    }
    w
}

fn dense_reference(
    v: &Velocity2D,
    f0: &Initial2D,
    grids: &[Grid1D; 2],
    periodic: [bool; 2],
    t: f64,
) -> Result<DenseMatrix> {
    let (xm, ym) = reference_maps(v, grids, t)?;
    Ok(eval_at_feet(f0, grids, periodic, &xm, &ym))
}

fn has_reference(id: ScenarioId) -> bool {
    !id.is_vlasov_poisson()
}

fn flip_rows(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    DenseMatrix::from_fn(n, m.cols(), |i, j| m[(n - 1 - i, j)])
}

/// Energy and mass of a dense 2D grid function.
fn dense_measures(f: &DenseMatrix, grids: &[Grid1D; 2], kinetic: bool, e: Option<&[f64]>) -> (f64, f64, f64) {
    let cell = grids[0].h() * grids[1].h();
    let v = grids[1].points();
    let mut mass = 0.0;
    let mut energy = 0.0;
    for j in 0..f.cols() {
        for &x in f.col(j) {
            mass += x;
            energy += if kinetic { 0.5 * v[j] * v[j] * x } else { 0.5 * x * x };
        }
    }
    let elec = e.map_or(0.0, |e| 0.5 * e.iter().map(|x| x * x).sum::<f64>() * grids[0].h());
    (mass * cell, energy * cell + elec, elec)
}

struct MatrixProblem {
    ev: Transport2D,
    id: ScenarioId,
    f0: Initial2D,
    kinetic: bool,
}

impl Problem for MatrixProblem {
    type State = LowRank2D;
    type Ev = Transport2D;

    fn evolution(&mut self) -> &mut Transport2D {
        &mut self.ev
    }

    fn measure(&mut self, f: &LowRank2D) -> Result<Measures> {
        let g = self.ev.grids();
        let (w1, w2) = (quadrature_weights(&g[0]), quadrature_weights(&g[1]));
        let mass = f.weighted_sum(&w1, &w2);
        let e = if self.kinetic { self.ev.field(f)? } else { None };
        let elec = e
            .as_ref()
            .map_or(0.0, |e| 0.5 * e.iter().map(|x| x * x).sum::<f64>() * g[0].h());
        let energy = if self.kinetic {
            let v2: Vec<f64> = g[1].points().iter().map(|v| 0.5 * v * v * g[1].h()).collect();
            f.weighted_sum(&w1, &v2) + elec
        } else {
            0.5 * f.frobenius_norm().powi(2) * g[0].h() * g[1].h()
        };
        let (r1, r2) = f.ranks();
        Ok(Measures {
            ranks: [Some(r1), Some(r2), None, None, None, None],
            mass,
            energy,
            elec_energy: elec,
        })
    }

    fn snapshot(&self, f: &LowRank2D) -> Result<SnapshotData> {
        Ok(SnapshotData::Grid2D(f.to_dense()))
    }

    fn error(&self, f: &LowRank2D, t: f64) -> Result<Option<f64>> {
        if !has_reference(self.id) {
            return Ok(None);
        }
        let r = dense_reference(
            &self.ev.velocity(),
            &self.f0,
            self.ev.grids(),
            periodic_dims(self.id),
            t,
        )?;
        Ok(Some(ErrorNorm::for_scenario(self.id).of_dense(&f.to_dense(), &r)))
    }

    fn distance(&self, a: &LowRank2D, b: &LowRank2D) -> Result<f64> {
        Ok(ErrorNorm::Frobenius.of_dense(&a.to_dense(), &b.to_dense()))
    }

    fn reverse(&self, f: &LowRank2D) -> Result<LowRank2D> {
        LowRank2D::new(f.u1().clone(), f.core().clone(), flip_rows(f.u2()))
    }

    fn wrap(s: Self::State) -> FinalState {
        FinalState::Matrix(s)
    }

    fn max_speeds(&mut self, f: &LowRank2D) -> Result<Vec<f64>> {
        let e = self.ev.field(f)?;
        Ok(self.ev.velocity().max_speeds(self.ev.grids(), e.as_deref())?.to_vec())
    }
}

struct MapProblem {
    ev: FlowMap2D,
    id: ScenarioId,
    kinetic: bool,
}

impl Problem for MapProblem {
    type State = MapPair;
    type Ev = FlowMap2D;

    fn evolution(&mut self) -> &mut FlowMap2D {
        &mut self.ev
    }

    fn measure(&mut self, m: &MapPair) -> Result<Measures> {
        let f = self.ev.solution(m);
        let e = if self.kinetic { self.ev.field(m)? } else { None };
        let (mass, energy, elec) = dense_measures(&f, self.ev.grids(), self.kinetic, e.as_deref());
        let (rx, ry) = m.ranks();
        Ok(Measures {
            ranks: [Some(rx), Some(ry), None, None, None, None],
            mass,
            energy,
            elec_energy: elec,
        })
    }

    fn snapshot(&self, m: &MapPair) -> Result<SnapshotData> {
        Ok(SnapshotData::Grid2D(self.ev.solution(m)))
    }

    fn error(&self, m: &MapPair, t: f64) -> Result<Option<f64>> {
        if !has_reference(self.id) {
            return Ok(None);
        }
        let g = self.ev.grids();
        let r = dense_reference(
            &self.ev.velocity(),
            &self.ev.initial_data(),
            g,
            periodic_dims(self.id),
            t,
        )?;
        Ok(Some(
            ErrorNorm::for_scenario(self.id).of_dense(&self.ev.solution(m), &r),
        ))
    }

    fn distance(&self, a: &MapPair, b: &MapPair) -> Result<f64> {
        Ok(ErrorNorm::Frobenius.of_dense(&self.ev.solution(a), &self.ev.solution(b)))
    }

    fn reverse(&self, _m: &MapPair) -> Result<MapPair> {
        Err(Error::Unsupported("velocity reversal of flow maps".into()))
    }

    fn wrap(s: Self::State) -> FinalState {
        FinalState::Maps(s)
    }

    fn max_speeds(&mut self, m: &MapPair) -> Result<Vec<f64>> {
        let e = self.ev.field(m)?;
        Ok(self.ev.velocity().max_speeds(self.ev.grids(), e.as_deref())?.to_vec())
    }
}

struct TensorProblem {
    ev: HtTransport,
    id: ScenarioId,
}

impl Problem for TensorProblem {
    type State = HtTensor;
    type Ev = HtTransport;

    fn evolution(&mut self) -> &mut HtTransport {
        &mut self.ev
    }

    fn measure(&mut self, f: &HtTensor) -> Result<Measures> {
        let g = self.ev.grids().to_vec();
        let w: Vec<Vec<f64>> = g.iter().map(quadrature_weights).collect();
        let mass = f.weighted_sum([&w[0], &w[1], &w[2], &w[3]])?;
        let cell: f64 = g.iter().map(Grid1D::h).product();
        let (energy, elec) = if self.id.is_vlasov_poisson() {
            let fs = self.ev.field(f)?;
            let elec = 0.5 * (fs.e1.frobenius_norm().powi(2) + fs.e2.frobenius_norm().powi(2)) * g[0].h() * g[1].h();
            let half_v2 = |d: usize| -> Vec<f64> { g[d].points().iter().map(|v| 0.5 * v * v * g[d].h()).collect() };
            let kin = f.weighted_sum([&w[0], &w[1], &half_v2(2), &w[3]])?
                + f.weighted_sum([&w[0], &w[1], &w[2], &half_v2(3)])?;
            (kin + elec, elec)
        } else {
            (0.5 * f.norm().powi(2) * cell, 0.0)
        };
        let r = f.ranks().0;
        Ok(Measures {
            ranks: [r[0], r[1], r[2], r[3], r[4], r[5]].map(Some),
            mass,
            energy,
            elec_energy: elec,
        })
    }

    fn snapshot(&self, f: &HtTensor) -> Result<SnapshotData> {
        let g = self.ev.grids();
        let c: Vec<Vec<f64>> = g.iter().map(centre_weights).collect();
        Ok(SnapshotData::Tensor4D {
            cut_xv: f.section((0, 2), [&c[1], &c[3]])?,
            cut_vv: f.section((2, 3), [&c[0], &c[1]])?,
            tensor: Box::new(f.clone()),
        })
    }

    fn error(&self, f: &HtTensor, t: f64) -> Result<Option<f64>> {
        if self.id != ScenarioId::Advection4d {
            return Ok(None);
        }
        let exact = models::advection4d_exact(self.ev.grids(), t)?;
        let diff = f.add(&exact.scaled(-1.0))?;
        let npts: usize = f.dims().iter().product();
        Ok(Some(diff.norm() / (npts as f64).sqrt()))
    }

    fn distance(&self, a: &HtTensor, b: &HtTensor) -> Result<f64> {
        Ok(a.add(&b.scaled(-1.0))?.norm())
    }

    fn reverse(&self, f: &HtTensor) -> Result<HtTensor> {
        Ok(f.flip_34())
    }

    fn wrap(s: Self::State) -> FinalState {
        FinalState::Tensor(s)
    }

    fn max_speeds(&mut self, f: &HtTensor) -> Result<Vec<f64>> {
        let g = self.ev.grids().to_vec();
        let vmax = |d: usize| g[d].points().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if self.id == ScenarioId::Advection4d {
            return Ok(vec![1.0; 4]);
        }
        let fs = self.ev.field(f)?;
        Ok(vec![vmax(2), vmax(3), fs.e1.max_abs(), fs.e2.max_abs()])
    }
}

/// Step size bound `cfl * min_d h_d / max_speed_d`.
fn stable_dt(cfl: f64, grids: &[Grid1D], speeds: &[f64]) -> Result<f64> {
    let dt = grids
        .iter()
        .zip(speeds)
        .filter(|(_, &s)| s > 0.0)
        .map(|(g, &s)| cfl * g.h() / s)
        .fold(f64::INFINITY, f64::min);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("no admissible time step (dt = {dt})")));
    }
    Ok(dt)
}

struct Driver<'a> {
    cfg: &'a ScenarioConfig,
    obs: &'a mut dyn Observer,
    records: Vec<DiagnosticsRecord>,
    base: Option<(f64, f64)>,
    step_seconds_total: f64,
    max_rank: usize,
}

impl<'a> Driver<'a> {
    fn emit<P: Problem>(
        &mut self,
        p: &mut P,
        s: &P::State,
        step: usize,
        t: f64,
        secs: f64,
        err: Option<f64>,
    ) -> Result<()> {
        let m = p.measure(s)?;
        let (m0, e0) = *self.base.get_or_insert((m.mass, m.energy));
        // zero-mean data (e.g. a sine factor) has no meaningful relative drift
        let rel = |x: f64, x0: f64| if x0.abs() > 1e-12 { (x - x0) / x0.abs() } else { x - x0 };
        let rec = DiagnosticsRecord {
            step,
            t,
            ranks: m.ranks,
            elec_energy: m.elec_energy,
            mass: m.mass,
            mass_rel_err: rel(m.mass, m0),
            energy: m.energy,
            energy_rel_err: rel(m.energy, e0),
            l2_err: err,
            step_seconds: secs,
        };
        if !(rec.mass.is_finite() && rec.energy.is_finite() && rec.elec_energy.is_finite()) {
            return Err(Error::NonFinite("diagnostics"));
        }
        self.max_rank = self.max_rank.max(rec.max_rank());
        self.obs.record(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    fn run<P: Problem>(mut self, mut p: P, init: P::State) -> Result<(RunOutput, P)> {
        let cfg = self.cfg;
        let grids = cfg.grids()?;
        let speeds = p.max_speeds(&init)?;
        let dt_max = stable_dt(cfg.cfl, &grids, &speeds)?;
        let phases: Vec<f64> = match cfg.reverse_at {
            Some(tr) => vec![tr, cfg.t_end - tr],
            None => vec![cfg.t_end],
        };
        let snap_due = |step: usize| cfg.snap_every > 0 && step.is_multiple_of(cfg.snap_every);

        self.emit(&mut p, &init, 0, 0.0, 0.0, None)?;
        if snap_due(0) {
            self.obs.snapshot(0, 0.0, &p.snapshot(&init)?)?;
        }
        let mut state = init.clone();
        let mut t = 0.0;
        let mut step = 0;
        let mut dt_used = dt_max;
        for (phase, &len) in phases.iter().enumerate() {
            if phase > 0 {
                state = p.reverse(&state)?;
            }
            let (n, dt) = uniform_steps(len, dt_max)?;
            dt_used = dt;
            let t0 = t;
            let mut ms = Multistep::new(cfg.integrator, dt, t0, state);
            for k in 1..=n {
                let start = Instant::now();
                ms.step(p.evolution())?;
                let secs = start.elapsed().as_secs_f64();
                self.step_seconds_total += secs;
                step += 1;
                t = t0 + k as f64 * dt;
                let last = phase + 1 == phases.len() && k == n;
                if step % cfg.diag_every == 0 || last {
                    let err = if last {
                        self.final_error(&p, ms.current(), &init, t)?
                    } else {
                        None
                    };
                    self.emit(&mut p, ms.current(), step, t, secs, err)?;
                }
                if snap_due(step) || (last && cfg.snap_every > 0) {
                    self.obs.snapshot(step, t, &p.snapshot(ms.current())?)?;
                }
            }
            state = ms.current().clone();
        }
        let error = match self.records.last() {
            Some(r) if r.step == step => r.l2_err,
            _ => None,
        };
        let out = RunOutput {
            records: self.records,
            state: P::wrap(state),
            steps: step,
            dt: dt_used,
            t_final: t,
            error,
            map_errors: None,
            error_norm: ErrorNorm::for_scenario(cfg.scenario),
            max_rank: self.max_rank,
            step_seconds_total: self.step_seconds_total,
        };
        Ok((out, p))
    }

    fn final_error<P: Problem>(&self, p: &P, s: &P::State, init: &P::State, t: f64) -> Result<Option<f64>> {
        if self.cfg.reverse_at.is_some() {
            return Ok(Some(p.distance(s, init)?));
        }
        p.error(s, t)
    }
}

fn drive<P: Problem>(cfg: &ScenarioConfig, obs: &mut dyn Observer, p: P, init: P::State) -> Result<(RunOutput, P)> {
    Driver {
        cfg,
        obs,
        records: Vec::new(),
        base: None,
        step_seconds_total: 0.0,
        max_rank: 0,
    }
    .run(p, init)
}

/// Run a scenario with the method selected in `cfg`.
pub fn run(cfg: &ScenarioConfig, obs: &mut dyn Observer) -> Result<RunOutput> {
    match cfg.method {
        Method::Solution => run_solution(cfg, obs),
        Method::Flowmap => run_flowmap(cfg, obs),
    }
}

/// Evolve the factored solution itself.
pub fn run_solution(cfg: &ScenarioConfig, obs: &mut dyn Observer) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.scenario.dims() == 4 {
        let ev = HtTransport::new(cfg)?;
        let init = models::initial_4d(cfg, ev.grids())?;
        let p = TensorProblem { ev, id: cfg.scenario };
        return Ok(drive(cfg, obs, p, init)?.0);
    }
    let ev = Transport2D::new(cfg)?;
    let f0 = Initial2D::for_config(cfg)?;
    let init = f0.low_rank(ev.grids(), cfg.eps, cfg.r_max)?;
    let p = MatrixProblem {
        ev,
        id: cfg.scenario,
        f0,
        kinetic: cfg.scenario.is_velocity_dim(1),
    };
    Ok(drive(cfg, obs, p, init)?.0)
}

/// Evolve the factored characteristic feet and evaluate the initial data on them.
pub fn run_flowmap(cfg: &ScenarioConfig, obs: &mut dyn Observer) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.scenario.dims() != 2 {
        return Err(Error::Unsupported(format!("flow-map method for {}", cfg.scenario)));
    }
    let ev = FlowMap2D::new(cfg)?;
    let init = ev.identity();
    let p = MapProblem {
        ev,
        id: cfg.scenario,
        kinetic: cfg.scenario.is_velocity_dim(1),
    };
    let (mut out, p) = drive(cfg, obs, p, init)?;
    if has_reference(cfg.scenario) && cfg.reverse_at.is_none() {
        if let FinalState::Maps(m) = &out.state {
            let (xr, yr) = reference_maps(&p.ev.velocity(), p.ev.grids(), out.t_final)?;
            let norm = ErrorNorm::for_scenario(cfg.scenario);
            out.map_errors = Some((norm.of_dense(&m.x.to_dense(), &xr), norm.of_dense(&m.y.to_dense(), &yr)));
        }
    }
    Ok(out)
}
