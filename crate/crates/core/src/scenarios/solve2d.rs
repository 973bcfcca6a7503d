//! Two-dimensional solvers: direct evolution of the factored solution and
//! evolution of the factored characteristic feet.

use std::sync::Arc;

use super::config::{ScenarioConfig, ScenarioId};
use super::models::{eval_at_feet, periodic_dims, Initial2D, SeparableSpeed, Velocity2D};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fields::{density_1d1v, poisson_1d};
use crate::integrator::Evolution;
use crate::lowrank::{DimAction, LowRank2D, SumBuilder2D, TermSpec2D};
use crate::stencil::{split_speed, Bias, Boundary, Grid1D, Reconstruction, StencilOperator};

/// Whether the speed multiplies the derivative (advective) or sits inside it (flux).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Flux,
    Advective,
}

/// One sign-definite piece `coeff * same(x_dim) * cross(x_other) * D_bias`.
/// `None` stands for a vector of ones.
#[derive(Clone, Debug)]
pub struct Piece {
    pub dim: usize,
    pub same: Option<Arc<[f64]>>,
    pub cross: Option<Arc<[f64]>>,
    pub bias: Bias,
    pub coeff: f64,
}

fn signed_parts(v: &[f64]) -> Vec<(f64, Option<Arc<[f64]>>)> {
    if v.iter().all(|&x| x == 1.0) {
        return vec![(1.0, None)];
    }
    let (p, m) = split_speed(v);
    let mut out = Vec::with_capacity(2);
    if p.iter().any(|&x| x > 0.0) {
        out.push((1.0, Some(p.into())));
    }
    if m.iter().any(|&x| x < 0.0) {
        out.push((-1.0, Some(m.into())));
    }
    out
}

/// Split `-speed * D` into pieces whose speed has a single sign, each paired
/// with the upwind bias for that sign.
pub fn pieces(sp: &SeparableSpeed) -> Vec<Piece> {
    if sp.scale == 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (ss, s) in signed_parts(&sp.same) {
        for (sc, c) in signed_parts(&sp.cross) {
            let sign = sp.scale.signum() * ss * sc;
            out.push(Piece {
                dim: sp.dim,
                same: s.clone(),
                cross: c,
                bias: if sign > 0.0 { Bias::Left } else { Bias::Right },
                coeff: -sp.scale,
            });
        }
    }
    out
}

/// Operators indexed by `[dim][bias]`.
pub type OpTable = [[Arc<StencilOperator>; 2]; 2];

fn bias_index(b: Bias) -> usize {
    match b {
        Bias::Left => 0,
        Bias::Right => 1,
    }
}

fn op_table(grids: &[Grid1D; 2], recon: Reconstruction, boundary: [Boundary; 2]) -> OpTable {
    [0, 1].map(|d| [Bias::Left, Bias::Right].map(|b| Arc::new(StencilOperator::new(&grids[d], b, recon, boundary[d]))))
}

fn piece_term(p: &Piece, ops: &OpTable, form: Form) -> TermSpec2D {
    let op = ops[p.dim][bias_index(p.bias)].clone();
    let deriv = match (&p.same, form) {
        (None, _) => DimAction::Derivative(op),
        (Some(s), Form::Flux) => DimAction::FluxDerivative { coeff: s.clone(), op },
        (Some(s), Form::Advective) => DimAction::AdvectiveDerivative { coeff: s.clone(), op },
    };
    let other = match &p.cross {
        None => DimAction::Identity,
        Some(c) => DimAction::Multiply(c.clone()),
    };
    if p.dim == 0 {
        TermSpec2D::new(deriv, other, p.coeff)
    } else {
        TermSpec2D::new(other, deriv, p.coeff)
    }
}

fn grids2(cfg: &ScenarioConfig) -> Result<[Grid1D; 2]> {
    let g = cfg.grids()?;
    <[Grid1D; 2]>::try_from(g).map_err(|_| Error::InvalidInput(format!("{} is not two-dimensional", cfg.scenario)))
}

/// Self-consistent field of a 1D1V distribution given its density.
fn vlasov_field(rho: &[f64], grids: &[Grid1D; 2]) -> Result<Vec<f64>> {
    Ok(poisson_1d(rho, grids[0].length())?.e)
}

/// Evolves the factored solution `f` of a 2D transport problem.
#[derive(Clone, Debug)]
pub struct Transport2D {
    grids: [Grid1D; 2],
    velocity: Velocity2D,
    ops: OpTable,
    form: Form,
    eps: f64,
    r_max: usize,
}

impl Transport2D {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let grids = grids2(cfg)?;
        let velocity = Velocity2D::for_scenario(cfg.scenario, cfg)?;
        let ops = op_table(&grids, cfg.recon, [Boundary::Periodic; 2]);
        Ok(Self {
            grids,
            velocity,
            ops,
            form: Form::Flux,
            eps: cfg.eps,
            r_max: cfg.r_max,
        })
    }

    pub fn grids(&self) -> &[Grid1D; 2] {
        &self.grids
    }

    pub fn velocity(&self) -> Velocity2D {
        self.velocity
    }

    /// Electric field along the first dimension, if the problem has one.
    pub fn field(&self, f: &LowRank2D) -> Result<Option<Vec<f64>>> {
        Ok(match self.velocity {
            Velocity2D::Vlasov => Some(vlasov_field(&density_1d1v(f, self.grids[1].h()), &self.grids)?),
            Velocity2D::LinearVp => Some(self.grids[0].sample(super::models::linear_vp_field)),
            _ => None,
        })
    }

    /// Separable terms of the right-hand side at `(f, t)`.
    pub fn rhs_terms(&self, f: &LowRank2D, t: f64) -> Result<Vec<TermSpec2D>> {
        let field = match self.velocity {
            Velocity2D::Vlasov => self.field(f)?,
            _ => None,
        };
        let speeds = self.velocity.separable(&self.grids, t, field.as_deref())?;
        Ok(speeds
            .iter()
            .flat_map(pieces)
            .map(|p| piece_term(&p, &self.ops, self.form))
            .collect())
    }
}

impl Evolution for Transport2D {
    type State = LowRank2D;

    fn combine(&mut self, states: &[(f64, &LowRank2D)], rhs: &[(f64, &LowRank2D, f64)]) -> Result<LowRank2D> {
        let mut sb = SumBuilder2D::new();
        for &(a, s) in states {
            sb.push(a, s);
        }
        for &(c, s, t) in rhs {
            let terms = self.rhs_terms(s, t)?;
            sb.push_terms(s, &terms, c)?;
        }
        let out = sb.truncate(self.eps, self.r_max)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("solution update"));
        }
        Ok(out)
    }
}

/// Factored characteristic feet `(X, Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapPair {
    pub x: LowRank2D,
    pub y: LowRank2D,
}

impl MapPair {
    pub fn get(&self, m: usize) -> &LowRank2D {
        if m == 0 {
            &self.x
        } else {
            &self.y
        }
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.x.rank(), self.y.rank())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Boundary treatment of map `m` along `dim`.
pub fn map_boundary(id: ScenarioId, dim: usize) -> Boundary {
    match (id, dim) {
        (ScenarioId::Rotation, _) => Boundary::Extrapolate,
        (ScenarioId::LinearVp | ScenarioId::TwoStream, 1) => Boundary::Extrapolate,
        _ => Boundary::Periodic,
    }
}

/// Evolves the characteristic feet with the advective equation
/// `X_t + a · ∇X = 0`, `X(0) = identity`, and recovers `f = f0(X, Y)`.
#[derive(Clone, Debug)]
pub struct FlowMap2D {
    grids: [Grid1D; 2],
    velocity: Velocity2D,
    f0: Initial2D,
    periodic: [bool; 2],
    ops: OpTable,
    /// Period jump of map `d` along its own dimension, zero if none.
    offsets: [f64; 2],
    /// Wrap corrections `[dim][bias]`.
    deltas: [[Vec<f64>; 2]; 2],
    eps: f64,
    r_max: usize,
}

impl FlowMap2D {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.recon != Reconstruction::Linear5 {
            return Err(Error::Unsupported("flow maps need a linear reconstruction".into()));
        }
        let grids = grids2(cfg)?;
        let velocity = Velocity2D::for_scenario(cfg.scenario, cfg)?;
        let boundary = [0, 1].map(|d| map_boundary(cfg.scenario, d));
        let ops = op_table(&grids, cfg.recon, boundary);
        let offsets = [0, 1].map(|d| {
            if boundary[d] == Boundary::Periodic {
                grids[d].length()
            } else {
                0.0
            }
        });
        let deltas = [0, 1].map(|d| [0, 1].map(|b| ops[d][b].wrap_correction()));
        Ok(Self {
            f0: Initial2D::for_config(cfg)?,
            periodic: periodic_dims(cfg.scenario),
            grids,
            velocity,
            ops,
            offsets,
            deltas,
            eps: cfg.eps,
            r_max: cfg.r_max,
        })
    }

    pub fn grids(&self) -> &[Grid1D; 2] {
        &self.grids
    }

    pub fn velocity(&self) -> Velocity2D {
        self.velocity
    }

    pub fn initial_data(&self) -> Initial2D {
        self.f0
    }

    /// Identity maps.
    pub fn identity(&self) -> MapPair {
        let x = self.grids[0].points();
        let y = self.grids[1].points();
        MapPair {
            x: LowRank2D::rank1(&x, &vec![1.0; y.len()], 1.0),
            y: LowRank2D::rank1(&vec![1.0; x.len()], &y, 1.0),
        }
    }

    /// Grid values of `f = f0(X, Y)`.
    pub fn solution(&self, maps: &MapPair) -> DenseMatrix {
        eval_at_feet(
            &self.f0,
            &self.grids,
            self.periodic,
            &maps.x.to_dense(),
            &maps.y.to_dense(),
        )
    }

    /// Electric field along the first dimension, if the problem has one.
    pub fn field(&self, maps: &MapPair) -> Result<Option<Vec<f64>>> {
        Ok(match self.velocity {
            Velocity2D::Vlasov => {
                let f = self.solution(maps);
                let dv = self.grids[1].h();
                let rho: Vec<f64> = (0..f.rows()).map(|i| f.row(i).iter().sum::<f64>() * dv).collect();
                Some(vlasov_field(&rho, &self.grids)?)
            }
            Velocity2D::LinearVp => Some(self.grids[0].sample(super::models::linear_vp_field)),
            _ => None,
        })
    }

    fn rhs_pieces(&self, maps: &MapPair, t: f64) -> Result<Vec<Piece>> {
        let field = match self.velocity {
            Velocity2D::Vlasov => self.field(maps)?,
            _ => None,
        };
        let speeds = self.velocity.separable(&self.grids, t, field.as_deref())?;
        Ok(speeds.iter().flat_map(pieces).collect())
    }
}

impl Evolution for FlowMap2D {
    type State = MapPair;

    fn combine(&mut self, states: &[(f64, &MapPair)], rhs: &[(f64, &MapPair, f64)]) -> Result<MapPair> {
        let mut builders = [SumBuilder2D::new(), SumBuilder2D::new()];
        for &(a, s) in states {
            builders[0].push(a, &s.x);
            builders[1].push(a, &s.y);
        }
        for &(c, s, t) in rhs {
            let ps = self.rhs_pieces(s, t)?;
            let terms: Vec<TermSpec2D> = ps.iter().map(|p| piece_term(p, &self.ops, Form::Advective)).collect();
            for (m, b) in builders.iter_mut().enumerate() {
                b.push_terms(s.get(m), &terms, c)?;
                if self.offsets[m] == 0.0 {
                    continue;
                }
                // the jump of map m along its own dimension feeds a rank-one source
                for p in ps.iter().filter(|p| p.dim == m) {
                    let delta = &self.deltas[m][bias_index(p.bias)];
                    let along: Vec<f64> = match &p.same {
                        None => delta.clone(),
                        Some(sv) => delta.iter().zip(sv.iter()).map(|(d, s)| d * s).collect(),
                    };
                    let n_other = self.grids[1 - m].n();
                    let across: Vec<f64> = match &p.cross {
                        None => vec![1.0; n_other],
                        Some(cv) => cv.to_vec(),
                    };
                    let g = if m == 0 {
                        LowRank2D::rank1(&along, &across, 1.0)
                    } else {
                        LowRank2D::rank1(&across, &along, 1.0)
                    };
                    b.push(c * p.coeff * self.offsets[m], &g);
                }
            }
        }
        let [bx, by] = builders;
        let out = MapPair {
            x: bx.truncate(self.eps, self.r_max)?,
            y: by.truncate(self.eps, self.r_max)?,
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("flow-map update"));
        }
        Ok(out)
    }
}
